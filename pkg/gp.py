"""
Evolutionary engine for symbolic regression.
PTC2 initialization, tournament selection, five variation operators and the
fit -> simplify -> refit pipeline, with best-on-validation model selection.
"""
import logging
import math
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data import SplitData
from expr import (
    ExpressionTree, Node, NodeKind, Operator, complexity, constant, depth, evaluate,
    function_set, node_depths, operators_with_arity, preorder, replace_subtree, size,
    subtree, to_text, variable,
)
from models import (
    ConfigurationError, GenerationLog, GpConfig, Individual, RunResult, Strategy,
    VariationOperator,
)
from optimizer import fit_constants, mse
from simplify import build_table, hash_simplify

logger = logging.getLogger(__name__)

MAX_VARIATION_TRIES = 10
MSE_TIE_TOLERANCE = 1e-12
LOG_EVERY = 10


class PrimitiveSet:
    """Operators and terminals available to tree construction."""

    def __init__(self, n_features: int, max_variadic_arity: int = 4, constant_range: float = 1.0):
        if n_features < 1:
            raise ConfigurationError("need at least one feature")
        self.n_features = n_features
        self.operators: List[Operator] = function_set(max_variadic_arity)
        self.max_arity = max(op.max_arity for op in self.operators)
        self.constant_range = constant_range

    def random_terminal(self, rng: np.random.Generator) -> Node:
        # Uniform over {constant} U {x_0 .. x_{d-1}}
        pick = int(rng.integers(self.n_features + 1))
        if pick == self.n_features:
            return constant(float(rng.uniform(-self.constant_range, self.constant_range)))
        return variable(pick)

    def random_operator(self, rng: np.random.Generator, max_arity: int) -> Tuple[Operator, int]:
        """An operator whose minimum arity fits `max_arity`, with a drawn arity."""
        candidates = [op for op in self.operators if op.min_arity <= max_arity]
        op = candidates[int(rng.integers(len(candidates)))]
        high = min(op.max_arity, max_arity)
        arity = op.min_arity if high == op.min_arity else int(rng.integers(op.min_arity, high + 1))
        return op, arity


class _Slot:
    """Mutable build node used while growing a PTC2 tree."""
    __slots__ = ("node", "operator", "children", "depth")

    def __init__(self, depth: int):
        self.node: Optional[Node] = None
        self.operator: Optional[Operator] = None
        self.children: List["_Slot"] = []
        self.depth = depth

    def freeze(self) -> Node:
        if self.operator is None:
            return self.node
        return Node(NodeKind.OPERATOR, operator=self.operator,
                    children=tuple(c.freeze() for c in self.children))


def ptc2(rng: np.random.Generator, max_depth: int, max_size: int,
         primitives: PrimitiveSet) -> ExpressionTree:
    """
    Probabilistic tree creation: draw a target size uniformly in [1, max_size], expand
    random frontier slots with operators while the budget allows, then fill the frontier
    with terminals.
    """
    if max_size < 1:
        raise ConfigurationError("max_size must be at least 1")
    target = int(rng.integers(1, max_size + 1))
    root = _Slot(0)
    if target == 1 or max_depth == 0:
        root.node = primitives.random_terminal(rng)
        return ExpressionTree(root.node)

    frontier = [root]
    count = 0
    while frontier and count + len(frontier) < target:
        slot = frontier.pop(int(rng.integers(len(frontier))))
        budget = target - count - len(frontier) - 1
        if slot.depth >= max_depth or budget < 1:
            slot.node = primitives.random_terminal(rng)
            count += 1
            continue
        op, arity = primitives.random_operator(rng, budget)
        slot.operator = op
        slot.children = [_Slot(slot.depth + 1) for _ in range(arity)]
        frontier.extend(slot.children)
        count += 1
    for slot in frontier:
        slot.node = primitives.random_terminal(rng)
    return ExpressionTree(root.freeze())


def better(a: Individual, b: Individual) -> bool:
    """Lexicographic (train MSE, size) comparison with an absolute MSE tie tolerance."""
    if math.isclose(a.train_mse, b.train_mse, rel_tol=0.0, abs_tol=MSE_TIE_TOLERANCE):
        return a.size < b.size
    return a.train_mse < b.train_mse


def best_of(individuals: Sequence[Individual]) -> Individual:
    winner = individuals[0]
    for ind in individuals[1:]:
        if better(ind, winner):
            winner = ind
    return winner


def tournament_select(population: Sequence[Individual], rng: np.random.Generator,
                      tournament_size: int = 3) -> Individual:
    """Best of `tournament_size` individuals drawn uniformly with replacement."""
    if not population:
        raise ConfigurationError("cannot select from an empty population")
    picks = rng.integers(len(population), size=tournament_size)
    return best_of([population[int(i)] for i in picks])


def _within_bounds(tree: ExpressionTree, max_depth: int, max_size: int) -> bool:
    return size(tree) <= max_size and depth(tree) <= max_depth


def crossover(a: ExpressionTree, b: ExpressionTree, rng: np.random.Generator,
              max_depth: int, max_size: int) -> ExpressionTree:
    """Replace a random subtree of `a` with a random subtree of `b`."""
    for _ in range(MAX_VARIATION_TRIES):
        pos_a = int(rng.integers(size(a)))
        pos_b = int(rng.integers(size(b)))
        child = replace_subtree(a, pos_a, subtree(b, pos_b))
        if _within_bounds(child, max_depth, max_size):
            return child
    return a


def _insert_node(tree: ExpressionTree, rng: np.random.Generator,
                 primitives: PrimitiveSet) -> ExpressionTree:
    pos = int(rng.integers(size(tree)))
    wrapped = subtree(tree, pos)
    op, arity = primitives.random_operator(rng, primitives.max_arity)
    children = [primitives.random_terminal(rng) for _ in range(arity)]
    children[int(rng.integers(arity))] = wrapped
    return replace_subtree(tree, pos, Node(NodeKind.OPERATOR, operator=op, children=tuple(children)))


def _remove_node(tree: ExpressionTree, rng: np.random.Generator) -> ExpressionTree:
    internal = [i for i, node in enumerate(preorder(tree)) if not node.is_terminal]
    if not internal:
        return tree
    pos = internal[int(rng.integers(len(internal)))]
    node = subtree(tree, pos)
    return replace_subtree(tree, pos, node.children[int(rng.integers(len(node.children)))])


def _replace_node(tree: ExpressionTree, rng: np.random.Generator,
                  primitives: PrimitiveSet) -> ExpressionTree:
    pos = int(rng.integers(size(tree)))
    node = subtree(tree, pos)
    if node.is_terminal:
        options = [variable(j) for j in range(primitives.n_features)
                   if not (node.kind == NodeKind.VARIABLE and node.index == j)]
        if node.kind == NodeKind.VARIABLE:
            options.append(constant(float(rng.uniform(-primitives.constant_range,
                                                      primitives.constant_range))))
        if not options:
            return tree
        return replace_subtree(tree, pos, options[int(rng.integers(len(options)))])
    arity = len(node.children)
    options = [op for op in operators_with_arity(arity, primitives.operators)
               if op != node.operator]
    if not options:
        return tree
    op = options[int(rng.integers(len(options)))]
    return replace_subtree(tree, pos, Node(NodeKind.OPERATOR, operator=op, children=node.children))


def _replace_subtree(tree: ExpressionTree, rng: np.random.Generator, primitives: PrimitiveSet,
                     max_depth: int, max_size: int) -> ExpressionTree:
    pos = int(rng.integers(size(tree)))
    old = subtree(tree, pos)
    size_budget = max_size - (size(tree) - old.size)
    depth_budget = max_depth - node_depths(tree)[pos]
    fresh = ptc2(rng, depth_budget, size_budget, primitives)
    return replace_subtree(tree, pos, fresh)


def mutate(tree: ExpressionTree, kind: VariationOperator, rng: np.random.Generator,
           primitives: PrimitiveSet, max_depth: int, max_size: int) -> ExpressionTree:
    """Apply one mutation, retrying when the result violates the size/depth bounds."""
    kind = VariationOperator(kind)
    for _ in range(MAX_VARIATION_TRIES):
        if kind == VariationOperator.INSERT_NODE:
            child = _insert_node(tree, rng, primitives)
        elif kind == VariationOperator.REMOVE_NODE:
            child = _remove_node(tree, rng)
        elif kind == VariationOperator.REPLACE_NODE:
            child = _replace_node(tree, rng, primitives)
        elif kind == VariationOperator.REPLACE_SUBTREE:
            child = _replace_subtree(tree, rng, primitives, max_depth, max_size)
        else:
            raise ConfigurationError(f"{kind.value} is not a mutation")
        if _within_bounds(child, max_depth, max_size):
            return child
    return tree


class GpEngine:
    """One evolutionary run: owns the rng, the simplification table and the LSH index."""

    def __init__(self, config: GpConfig, splits: SplitData, strategy: Strategy = Strategy.NONE):
        self.config = config
        self.splits = splits
        self.strategy = Strategy(strategy)
        if splits.X_train.shape[0] < 1 or splits.X_val.shape[0] < 1:
            raise ConfigurationError("dataset too small to split into train/validation/test")
        self.rng = np.random.default_rng([config.seed, 1])
        self.primitives = PrimitiveSet(
            splits.X_train.shape[1], config.max_variadic_arity, config.constant_range
        )
        self.operators = list(config.probabilities.keys())
        self.weights = np.array([config.probabilities[op] for op in self.operators])
        self.simplifier = config.simplify_config(self.strategy)
        self.table = None
        self.index = None
        if self.simplifier.enabled:
            self.table, self.index = build_table(
                splits.X_train, hash_bits=config.hash_bits, seed=config.seed,
                adaptive=config.adaptive_hash, max_hash_bits=config.max_hash_bits,
            )

    def _val_mse(self, tree: ExpressionTree) -> float:
        return mse(evaluate(tree, self.splits.X_val), self.splits.y_val)

    def process(self, tree: ExpressionTree) -> Individual:
        """LM fit, then (when simplifying) hash_simplify and a second LM fit."""
        X, y = self.splits.X_train, self.splits.y_train
        tree, train_mse = fit_constants(tree, X, y, self.config.lm_max_iter)
        n_simplified = 0
        if self.simplifier.enabled and math.isfinite(train_mse):
            simplified, n_simplified = hash_simplify(
                tree, self.table, self.index, X, self.simplifier.tolerance, self.simplifier.order
            )
            if depth(simplified) > self.config.max_depth:
                logger.debug(f"discarding simplification deeper than {self.config.max_depth}")
                n_simplified = 0
            else:
                tree, train_mse = fit_constants(simplified, X, y, self.config.lm_max_iter)
        return Individual(
            tree=tree, train_mse=train_mse, val_mse=self._val_mse(tree),
            size=size(tree), n_simplifications=n_simplified,
        )

    def vary(self, population: Sequence[Individual]) -> ExpressionTree:
        """One offspring: tournament parent(s) and exactly one variation operator."""
        cfg = self.config
        op = self.operators[int(self.rng.choice(len(self.operators), p=self.weights))]
        parent = tournament_select(population, self.rng, cfg.tournament_size)
        if op == VariationOperator.CROSSOVER:
            other = tournament_select(population, self.rng, cfg.tournament_size)
            return crossover(parent.tree, other.tree, self.rng, cfg.max_depth, cfg.max_size)
        return mutate(parent.tree, op, self.rng, self.primitives, cfg.max_depth, cfg.max_size)

    def _log_row(self, generation: int, best: Individual, population: Sequence[Individual],
                 n_simplifications: int, started: float) -> GenerationLog:
        elapsed = time.perf_counter() - started if self.config.record_timing else 0.0
        return GenerationLog(
            generation=generation,
            best_val_mse=best.val_mse,
            n_simplifications=n_simplifications,
            elapsed_seconds=elapsed,
            best_train_mse=best_of(population).train_mse,
            mean_size=float(np.mean([ind.size for ind in population])),
            mean_complexity=float(np.mean([complexity(ind.tree) for ind in population])),
        )

    def run(self, dataset_name: str = "dataset", truncate_hash: Optional[int] = None,
            min_class_size: int = 1) -> RunResult:
        """
        Evolve for `generations` log rows: row 0 is the initial population, every
        further row one generation of offspring.

        Returns:
            RunResult for the individual with the lowest validation MSE ever observed
        """
        cfg = self.config
        started = time.perf_counter()
        primitives = self.primitives

        population = [self.process(ptc2(self.rng, cfg.max_depth, cfg.max_size, primitives))
                      for _ in range(cfg.pop_size)]
        best = min(population, key=lambda ind: ind.val_mse)
        log = [self._log_row(0, best, population,
                             sum(ind.n_simplifications for ind in population), started)]

        for generation in range(1, cfg.generations):
            elite = best_of(population)
            offspring = [self.process(self.vary(population)) for _ in range(cfg.pop_size)]
            for ind in offspring:
                if ind.val_mse < best.val_mse:
                    best = ind
            worst = max(range(len(offspring)),
                        key=lambda i: (offspring[i].train_mse, offspring[i].size, -i))
            population = [elite] + [ind for i, ind in enumerate(offspring) if i != worst]
            log.append(self._log_row(generation, best, population,
                                     sum(ind.n_simplifications for ind in offspring), started))
            if generation % LOG_EVERY == 0:
                logger.info(
                    f"[{self.strategy.value} seed={cfg.seed}] gen {generation}: "
                    f"best val mse {best.val_mse:.6g}, {log[-1].n_simplifications} simplifications"
                )

        wall = time.perf_counter() - started if cfg.record_timing else 0.0
        test_mse = mse(evaluate(best.tree, self.splits.X_test), self.splits.y_test)
        return RunResult(
            dataset=dataset_name,
            strategy=self.strategy,
            seed=cfg.seed,
            final_model=to_text(best.tree),
            train_mse=best.train_mse,
            val_mse=best.val_mse,
            test_mse=test_mse,
            size=size(best.tree),
            depth=depth(best.tree),
            complexity=complexity(best.tree),
            log=log,
            total_simplifications=sum(row.n_simplifications for row in log),
            table_entries=self.table.total_entries if self.table is not None else 0,
            table_expressions=self.table.total_expressions if self.table is not None else 0,
            table_dump=self.table.dump(truncate_hash, min_class_size) if self.table is not None else "",
            wall_seconds=wall,
        )


def evolve(config: GpConfig, dataset_splits: SplitData,
           strategy: Strategy = Strategy.NONE, dataset_name: str = "dataset",
           truncate_hash: Optional[int] = None, min_class_size: int = 1) -> RunResult:
    """Run one evolution; see GpEngine.run."""
    engine = GpEngine(config, dataset_splits, strategy)
    return engine.run(dataset_name, truncate_hash, min_class_size)
