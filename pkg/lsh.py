"""
SimHash locality-sensitive hashing over prediction vectors.
Random Gaussian hyperplanes turn a vector into a bit-string key; vectors at a small
angle share most bits, so semantically close subtrees land in the same bucket.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

HashKey = str


class HashingError(ValueError):
    """Vector cannot be hashed (non-finite entries or wrong length)."""


@dataclass(frozen=True)
class HyperplaneSet:
    """A b x d matrix of i.i.d. standard normal entries, deterministic in (seed, bits, dim)."""
    bits: int
    dim: int
    seed: int = 0
    planes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.bits < 1 or self.dim < 1:
            raise HashingError(f"invalid hyperplane shape ({self.bits}, {self.dim})")
        rng = np.random.default_rng(self.seed)
        object.__setattr__(self, "planes", rng.standard_normal((self.bits, self.dim)))

    def signs(self, pred) -> np.ndarray:
        """Bit vector: 1 where the projection is strictly positive."""
        pred = np.asarray(pred, dtype=float)
        if pred.shape != (self.dim,):
            raise HashingError(f"expected a vector of length {self.dim}, got shape {pred.shape}")
        if not np.all(np.isfinite(pred)):
            raise HashingError("cannot hash a vector with non-finite entries")
        return (self.planes @ pred) > 0

    def hash(self, pred) -> HashKey:
        bits = self.signs(pred).astype(np.uint8) + ord("0")
        return bits.tobytes().decode("ascii")


class LshIndex:
    """Hyperplanes plus one representative vector per bucket (the first one indexed)."""

    def __init__(self, bits: int, dim: int, seed: int = 0):
        self.seed = seed
        self.hyperplanes = HyperplaneSet(bits, dim, seed)
        self.representatives: Dict[HashKey, np.ndarray] = {}

    @property
    def bits(self) -> int:
        return self.hyperplanes.bits

    @property
    def dim(self) -> int:
        return self.hyperplanes.dim

    def __len__(self) -> int:
        return len(self.representatives)

    def __contains__(self, key: HashKey) -> bool:
        return key in self.representatives

    def hash(self, pred) -> HashKey:
        return self.hyperplanes.hash(pred)

    def index(self, pred) -> HashKey:
        """Hash `pred`, storing it as the bucket representative if the bucket is new."""
        key = self.hash(pred)
        if key not in self.representatives:
            self.representatives[key] = np.array(pred, dtype=float)
        return key

    def query(self, pred) -> Tuple[HashKey, float]:
        """Key of `pred` and its mean squared distance to the bucket representative."""
        key = self.hash(pred)
        rep = self.representatives.get(key)
        if rep is None:
            return key, math.inf
        with np.errstate(over="ignore"):
            diff = np.asarray(pred, dtype=float) - rep
            return key, float(np.mean(diff * diff))

    def rebuild(self, bits: int, seed: Optional[int] = None) -> None:
        """Draw new hyperplanes and forget every bucket."""
        self.seed = self.seed if seed is None else seed
        self.hyperplanes = HyperplaneSet(bits, self.dim, self.seed)
        self.representatives.clear()
        logger.debug(f"LSH index rebuilt with {bits} bits")


def angular_collision_probability(x, y) -> float:
    """1 - theta(x, y) / pi, the per-bit agreement probability of random hyperplanes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    norm = np.linalg.norm(x) * np.linalg.norm(y)
    if norm == 0:
        return 1.0 if np.linalg.norm(x) == np.linalg.norm(y) else 0.5
    cos = np.clip(np.dot(x, y) / norm, -1.0, 1.0)
    return 1.0 - math.acos(cos) / math.pi


def collision_probability_estimate(x, y, trials: int = 1, bits: int = 4096, seed: int = 0) -> float:
    """Fraction of agreeing bits over `trials` independently seeded hyperplane sets."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise HashingError(f"shape mismatch {x.shape} vs {y.shape}")
    agree = 0
    for t in range(trials):
        planes = HyperplaneSet(bits, x.shape[0], seed + t)
        agree += int(np.count_nonzero(planes.signs(x) == planes.signs(y)))
    return agree / (trials * bits)
