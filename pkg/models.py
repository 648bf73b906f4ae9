"""
Data models for run configuration, individuals and experiment results.
"""
import math
from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, model_validator

from expr import ExpressionTree


class ConfigurationError(ValueError):
    """Raised when a run cannot be configured (bad hyperparameters or too little data)."""


class Strategy(str, Enum):
    """Simplification strategy of a run."""
    NONE = "none"
    BOTTOM_UP = "bottom_up"
    TOP_DOWN = "top_down"


class VariationOperator(str, Enum):
    """The five variation operators, each applied with its own probability."""
    CROSSOVER = "crossover"
    INSERT_NODE = "insert_node"
    REMOVE_NODE = "remove_node"
    REPLACE_NODE = "replace_node"
    REPLACE_SUBTREE = "replace_subtree"


def _uniform_probabilities() -> Dict[VariationOperator, float]:
    return {op: 1.0 / len(VariationOperator) for op in VariationOperator}


class SimplifyConfig(BaseModel):
    """Settings of the inexact simplification step."""
    tolerance: float = Field(default=1e-2, gt=0, description="Maximum bucket distance (MSE)")
    order: Strategy = Strategy.BOTTOM_UP
    enabled: bool = True

    @model_validator(mode="after")
    def _order_is_a_traversal(self) -> "SimplifyConfig":
        if self.enabled and self.order == Strategy.NONE:
            raise ValueError("an enabled simplifier needs order bottom_up or top_down")
        return self


class GpConfig(BaseModel):
    """Symbolic regression hyperparameters."""
    pop_size: int = Field(default=80, ge=2)
    generations: int = Field(default=200, ge=1)
    max_depth: int = Field(default=7, ge=0)
    max_size: int = Field(default=128, ge=1)
    tolerance: float = Field(default=1e-2, gt=0)
    hash_bits: int = Field(default=256, ge=1)
    adaptive_hash: bool = False
    max_hash_bits: int = Field(default=8192, ge=1)
    max_variadic_arity: int = Field(default=4, ge=2)
    tournament_size: int = Field(default=3, ge=1)
    probabilities: Dict[VariationOperator, float] = Field(default_factory=_uniform_probabilities)
    lm_max_iter: int = Field(default=20, ge=0)
    constant_range: float = Field(default=1.0, gt=0, description="New constants ~ U[-r, r]")
    record_timing: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def _check_probabilities(self) -> "GpConfig":
        missing = [op.value for op in VariationOperator if op not in self.probabilities]
        if missing:
            raise ValueError(f"missing probabilities for: {', '.join(missing)}")
        if any(p < 0 for p in self.probabilities.values()):
            raise ValueError("variation probabilities must be non-negative")
        total = sum(self.probabilities.values())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"variation probabilities must sum to 1, got {total}")
        if self.max_hash_bits < self.hash_bits:
            raise ValueError("max_hash_bits must be at least hash_bits")
        return self

    def simplify_config(self, strategy: Strategy) -> SimplifyConfig:
        """Simplifier settings for a run of the given strategy."""
        if strategy == Strategy.NONE:
            return SimplifyConfig(tolerance=self.tolerance, enabled=False, order=Strategy.NONE)
        return SimplifyConfig(tolerance=self.tolerance, order=strategy)


class Individual(BaseModel):
    """A tree and its fitness. Non-finite predictions give an infinite error."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    tree: ExpressionTree
    train_mse: float
    val_mse: float
    size: int
    n_simplifications: int = 0


class GenerationLog(BaseModel):
    """One row of the convergence log."""
    generation: int
    best_val_mse: float
    n_simplifications: int
    elapsed_seconds: float
    best_train_mse: float
    mean_size: float
    mean_complexity: float


class RunResult(BaseModel):
    """Everything one evolutionary run reports."""
    dataset: str
    strategy: Strategy
    seed: int
    final_model: str
    train_mse: float
    val_mse: float
    test_mse: float
    size: int
    depth: int
    complexity: int
    log: List[GenerationLog] = Field(default_factory=list)
    total_simplifications: int = 0
    table_entries: int = 0
    table_expressions: int = 0
    table_dump: str = ""
    wall_seconds: float = 0.0

    model_config = ConfigDict(use_enum_values=True)


class RunSummary(BaseModel):
    """A summary.csv row."""
    dataset: str
    strategy: str
    seed: int
    test_mse: float
    size: int
    complexity: int
    total_simplifications: int
    table_entries: int
    table_expressions: int
    wall_seconds: float

    @classmethod
    def from_result(cls, result: RunResult) -> "RunSummary":
        return cls(
            dataset=result.dataset,
            strategy=str(result.strategy),
            seed=result.seed,
            test_mse=result.test_mse,
            size=result.size,
            complexity=result.complexity,
            total_simplifications=result.total_simplifications,
            table_entries=result.table_entries,
            table_expressions=result.table_expressions,
            wall_seconds=result.wall_seconds,
        )
