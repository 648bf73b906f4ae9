"""
Inexact simplification by memoization.
Every subtree's prediction vector is hashed with SimHash; subtrees whose vectors land in
a known bucket within the tolerance are replaced by the smallest tree seen in that bucket.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

import numpy as np

from expr import (
    ExpressionTree, Node, NodeKind, Vector, apply_operator, constant, evaluate,
    evaluate_with_trace, to_text, variable,
)
from lsh import HashKey, LshIndex
from models import Strategy

logger = logging.getLogger(__name__)


class TableError(ValueError):
    """Invalid simplification table access."""


@dataclass(frozen=True)
class TableMember:
    node: Node
    text: str
    order: int

    @property
    def size(self) -> int:
        return self.node.size


@dataclass(frozen=True)
class Replacement:
    """One substitution made while simplifying."""
    before: str
    after: str
    distance: float
    counted: bool


class SimplificationTable:
    """Hash key -> class of subtrees observed to behave alike on the training data."""

    def __init__(self):
        self._classes: Dict[HashKey, List[TableMember]] = {}
        self._texts: Dict[HashKey, Set[str]] = {}
        self._smallest: Dict[HashKey, TableMember] = {}
        self._order = 0
        self.total_insertions = 0
        self.simplifications_performed = 0
        self.collisions: List[HashKey] = []

    def __contains__(self, key: HashKey) -> bool:
        return key in self._classes

    def __len__(self) -> int:
        return len(self._classes)

    @property
    def total_entries(self) -> int:
        return len(self._classes)

    @property
    def total_expressions(self) -> int:
        return sum(len(members) for members in self._classes.values())

    def _member(self, node: Node) -> TableMember:
        member = TableMember(node, to_text(node), self._order)
        self._order += 1
        return member

    def create(self, key: HashKey, node: Node) -> None:
        """Open a new class holding only `node`."""
        if key in self._classes:
            raise TableError(f"entry {key[:16]}... already exists")
        member = self._member(node)
        self._classes[key] = [member]
        self._texts[key] = {member.text}
        self._smallest[key] = member
        self.total_insertions += 1

    def add(self, key: HashKey, node: Node) -> bool:
        """Append `node` to an existing class. Returns False when it is already represented."""
        if key not in self._classes:
            raise TableError(f"no entry for key {key[:16]}...")
        self.total_insertions += 1
        members = self._classes[key]
        text = to_text(node)
        if text in self._texts[key]:
            return False
        # Constant leaves differ only in value; one per class is enough
        if node.kind == NodeKind.CONSTANT and any(
            m.node.kind == NodeKind.CONSTANT for m in members
        ):
            return False
        member = self._member(node)
        members.append(member)
        self._texts[key].add(text)
        if member.size < self._smallest[key].size:
            self._smallest[key] = member
        return True

    def smallest(self, key: HashKey) -> Node:
        if key not in self._smallest:
            raise TableError(f"no entry for key {key[:16]}...")
        return self._smallest[key].node

    def members(self, key: HashKey) -> List[Node]:
        """Class members, smallest first, ties in insertion order."""
        if key not in self._classes:
            raise TableError(f"no entry for key {key[:16]}...")
        return [m.node for m in sorted(self._classes[key], key=lambda m: (m.size, m.order))]

    def classes(self, min_members: int = 1) -> Iterator[Tuple[HashKey, List[Node]]]:
        for key, members in self._classes.items():
            if len(members) >= min_members:
                yield key, self.members(key)

    def dump(self, truncate: Optional[int] = None, min_members: int = 1) -> str:
        return dump_table(self, truncate=truncate, min_members=min_members)


def canonicalize_constant(pred: Vector) -> Vector:
    """Zero out constant vectors so every constant subtree shares one bucket."""
    pred = np.asarray(pred, dtype=float)
    if pred.size and np.all(pred == pred[0]):
        return np.zeros_like(pred)
    return pred


def initialize_table(X_train, constant_tree: Union[ExpressionTree, Node],
                     index: LshIndex) -> SimplificationTable:
    """Seed a table with the constant and one variable per feature, each in its own entry."""
    X_train = np.asarray(X_train, dtype=float)
    if X_train.ndim != 2 or X_train.shape[0] < 1:
        raise TableError("training inputs need at least one sample")
    cte = constant_tree.root if isinstance(constant_tree, ExpressionTree) else constant_tree
    if cte.kind != NodeKind.CONSTANT:
        raise TableError("initial constant tree must be a single constant node")

    table = SimplificationTable()
    terminals = [cte] + [variable(j) for j in range(X_train.shape[1])]
    for terminal in terminals:
        pred = evaluate(terminal, X_train)
        if not np.all(np.isfinite(pred)):
            logger.warning(f"terminal {to_text(terminal)} has non-finite values, not indexed")
            continue
        key = index.index(canonicalize_constant(pred))
        if key in table:
            table.collisions.append(key)
            table.add(key, terminal)
            logger.warning(
                f"terminal {to_text(terminal)} collides with "
                f"{to_text(table.smallest(key))} at {index.bits} bits"
            )
        else:
            table.create(key, terminal)
    return table


def build_table(X_train, hash_bits: int = 256, seed: int = 0, adaptive: bool = False,
                max_hash_bits: int = 8192,
                constant_tree: Optional[Node] = None) -> Tuple[SimplificationTable, LshIndex]:
    """Create the index and its initial table, doubling the hash size on terminal collisions
    when `adaptive` is set."""
    X_train = np.asarray(X_train, dtype=float)
    cte = constant_tree if constant_tree is not None else constant(1.0)
    index = LshIndex(hash_bits, X_train.shape[0], seed)
    while True:
        table = initialize_table(X_train, cte, index)
        if not table.collisions or not adaptive:
            break
        if index.bits * 2 > max_hash_bits:
            logger.warning(
                f"terminal collisions remain at {index.bits} bits (cap {max_hash_bits}); keeping them"
            )
            break
        index.rebuild(index.bits * 2)
        logger.info(f"terminal collision, growing hash to {index.bits} bits")
    return table, index


def smallest_entry(table: SimplificationTable, key: HashKey) -> Node:
    return table.smallest(key)


def dump_table(table: SimplificationTable, truncate: Optional[int] = None,
               min_members: int = 1) -> str:
    """Text dump: one block per entry, key line then `- member` lines, counters footer."""
    if table.total_entries == 0:
        return ""
    blocks = []
    for key, members in table.classes(min_members):
        shown = key if truncate is None or truncate >= len(key) else key[:truncate] + "..."
        blocks.append("\n".join([shown] + [f"- {to_text(m)}" for m in members]))
    footer = f"entries={table.total_entries} expressions={table.total_expressions}"
    return "\n\n".join(blocks + [footer]) + "\n"


class _SimplifyPass:
    """State of one hash_simplify call."""

    def __init__(self, table: SimplificationTable, index: LshIndex, X: np.ndarray,
                 tolerance: float, replacements: Optional[List[Replacement]]):
        self.table = table
        self.index = index
        self.X = X
        self.tolerance = tolerance
        self.replacements = replacements
        self.count = 0

    def visit(self, node: Node, pred: Vector) -> Tuple[Node, Vector, bool]:
        if not np.all(np.isfinite(pred)):
            return node, pred, False
        canonical = canonicalize_constant(pred)
        key, distance = self.index.query(canonical)
        if key not in self.table:
            self.index.index(canonical)
            self.table.create(key, node)
            return node, pred, False
        if distance > self.tolerance:
            return node, pred, False

        self.table.add(key, node)
        best = self.table.smallest(key)
        if best.size > node.size:
            return node, pred, False
        if best.kind == NodeKind.CONSTANT:
            # Mean of the replaced predictions; exact for constant vectors
            value = float(pred[0]) if np.all(pred == pred[0]) else float(np.mean(pred))
            replacement = constant(value)
            new_pred = np.full_like(pred, value)
        else:
            replacement = best
            new_pred = None
        if replacement == node:
            return node, pred, False
        if new_pred is None:
            new_pred = evaluate(replacement, self.X)

        counted = replacement.size < node.size
        if counted:
            self.count += 1
            self.table.simplifications_performed += 1
        if self.replacements is not None:
            self.replacements.append(
                Replacement(to_text(node), to_text(replacement), distance, counted)
            )
        return replacement, new_pred, True

    def bottom_up(self, node: Node, offset: int, trace) -> Tuple[Node, Vector]:
        if node.is_terminal:
            new, pred, _ = self.visit(node, trace[offset])
            return new, pred
        children, preds, changed = [], [], False
        child_offset = offset + 1
        for child in node.children:
            new_child, pred = self.bottom_up(child, child_offset, trace)
            child_offset += child.size
            changed = changed or new_child is not child
            children.append(new_child)
            preds.append(pred)
        if changed:
            node = node.with_children(children)
            pred = apply_operator(node.operator, preds)
        else:
            pred = trace[offset]
        new, pred, _ = self.visit(node, pred)
        return new, pred

    def top_down(self, node: Node, offset: int, trace) -> Node:
        new, _, replaced = self.visit(node, trace[offset])
        if replaced or node.is_terminal:
            return new
        children, changed = [], False
        child_offset = offset + 1
        for child in node.children:
            new_child = self.top_down(child, child_offset, trace)
            child_offset += child.size
            changed = changed or new_child is not child
            children.append(new_child)
        return node.with_children(children) if changed else node


def hash_simplify(tree: Union[ExpressionTree, Node], table: SimplificationTable,
                  index: LshIndex, X_train, tolerance: float = 1e-2,
                  order: Union[Strategy, str] = Strategy.BOTTOM_UP,
                  replacements: Optional[List[Replacement]] = None) -> Tuple[ExpressionTree, int]:
    """
    Simplify a tree against the table, applying replacements on the fly.

    Args:
        tree: Tree to simplify
        table: Simplification table (mutated: new entries and members)
        index: LSH index the table was built with (mutated: new representatives)
        X_train: Training inputs the table was built on
        tolerance: Maximum mean squared distance to the bucket representative
        order: bottom_up or top_down traversal
        replacements: Optional list receiving one record per substitution

    Returns:
        The simplified tree and the number of size-reducing replacements
    """
    order = Strategy(order)
    if order == Strategy.NONE:
        raise TableError("hash_simplify needs order bottom_up or top_down")
    root = tree.root if isinstance(tree, ExpressionTree) else tree
    X_train = np.asarray(X_train, dtype=float)
    trace = evaluate_with_trace(root, X_train)

    simplifier = _SimplifyPass(table, index, X_train, tolerance, replacements)
    if order == Strategy.BOTTOM_UP:
        new_root, _ = simplifier.bottom_up(root, 0, trace)
    else:
        new_root = simplifier.top_down(root, 0, trace)
    return ExpressionTree(new_root), simplifier.count
