"""
Dataset ingestion and seeded train/validation/test splitting.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4


class DatasetError(ValueError):
    """Dataset cannot be loaded or split."""


class Dataset(BaseModel):
    """Feature matrix X (n x d), target y (n) and feature names; all values finite."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    X: np.ndarray
    y: np.ndarray
    feature_names: List[str] = Field(default_factory=list)
    name: str = "dataset"

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])


class Splits(BaseModel):
    """Disjoint, covering index sets: 50% train, 25% validation, 25% test."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


class SplitData(BaseModel):
    """The three partitions materialized as arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def load_csv(path: Union[str, Path], target_column: Optional[str] = None) -> Dataset:
    """
    Load a headed, comma-separated CSV.

    Args:
        path: CSV file path
        target_column: Name of the target column (default: last column)

    Returns:
        Dataset with the remaining columns as features, in header order
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"dataset file is empty: {path}") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetError(f"cannot parse {path}: {e}") from None

    if frame.shape[1] < 2:
        raise DatasetError(f"{path} needs a target and at least one feature column")
    if frame.empty:
        raise DatasetError(f"dataset file has no rows: {path}")
    target = target_column if target_column is not None else frame.columns[-1]
    if target not in frame.columns:
        raise DatasetError(f"target column {target!r} not found in {path}")

    for column in frame.columns:
        try:
            frame[column] = pd.to_numeric(frame[column], errors="raise")
        except (ValueError, TypeError):
            raise DatasetError(f"column {column!r} has non-numeric values") from None

    values = frame.to_numpy(dtype=float)
    finite = np.all(np.isfinite(values), axis=1)
    rejected = int((~finite).sum())
    if rejected:
        logger.warning(f"rejected {rejected} rows with non-finite values from {path.name}")
        frame = frame[finite]
    if frame.empty:
        raise DatasetError(f"no finite rows left in {path}")

    features = [c for c in frame.columns if c != target]
    dataset = Dataset(
        X=frame[features].to_numpy(dtype=float),
        y=frame[target].to_numpy(dtype=float),
        feature_names=[str(c) for c in features],
        name=path.stem,
    )
    logger.info(f"Loaded {dataset.name}: n={dataset.n_samples}, d={dataset.n_features}")
    return dataset


def split(dataset: Dataset, seed: int) -> Splits:
    """Seeded uniform shuffle, then contiguous 50/25/25 blocks (train gets floor(n/2))."""
    n = dataset.n_samples
    if n < MIN_SAMPLES:
        raise DatasetError(f"need at least {MIN_SAMPLES} samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val = n // 2, n // 4
    return Splits(
        train=order[:n_train],
        validation=order[n_train:n_train + n_val],
        test=order[n_train + n_val:],
    )


def split_arrays(dataset: Dataset, splits: Splits) -> SplitData:
    return SplitData(
        X_train=dataset.X[splits.train], y_train=dataset.y[splits.train],
        X_val=dataset.X[splits.validation], y_val=dataset.y[splits.validation],
        X_test=dataset.X[splits.test], y_test=dataset.y[splits.test],
    )


def make_synthetic(n: int = 300, seed: int = 0, noise: float = 0.0) -> Dataset:
    """y = x_1 * x_2 + sin(x_3) over four features uniform in [-1, 1]; x_0 is a distractor."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 4))
    y = X[:, 1] * X[:, 2] + np.sin(X[:, 3])
    if noise > 0:
        y = y + rng.normal(0.0, noise, size=n)
    return Dataset(X=X, y=y, feature_names=[f"x_{j}" for j in range(4)], name="synthetic")


def to_frame(dataset: Dataset, target_name: str = "y") -> pd.DataFrame:
    frame = pd.DataFrame(dataset.X, columns=dataset.feature_names)
    frame[target_name] = dataset.y
    return frame
