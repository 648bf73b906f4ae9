"""
Expression trees for symbolic regression.
Typed operator/terminal nodes, vectorized evaluation with per-node traces,
size/depth/complexity metrics and the functional text format `name(arg, ...)`.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Vector = np.ndarray
Evaluator = Callable[..., Vector]
Partials = Callable[..., List[Vector]]

DEFAULT_MAX_VARIADIC_ARITY = 4

# Leaf weights of the recursive complexity
CONSTANT_COMPLEXITY = 2
VARIABLE_COMPLEXITY = 1


class ExpressionError(ValueError):
    """Structural problem with a tree (bad arity, variable out of range, bad position)."""


class ParseError(ValueError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


@dataclass(frozen=True, eq=False)
class Operator:
    """A function-set member with its arity range and complexity weight.

    Operators compare by name, so trees built under different variadic caps are equal.
    """
    name: str
    min_arity: int
    max_arity: int
    complexity: int
    evaluator: Evaluator = field(repr=False)
    partials: Partials = field(repr=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, Operator) and other.name == self.name

    def __hash__(self) -> int:
        return hash(self.name)

    def accepts(self, arity: int) -> bool:
        return self.min_arity <= arity <= self.max_arity

    def __call__(self, *args: Vector) -> Vector:
        with np.errstate(all="ignore"):
            return self.evaluator(*args)


def _left_branch_sign(a: Vector) -> Vector:
    # |a| at 0 takes the left derivative
    return np.where(a > 0, 1.0, -1.0)


def _product_partials(*args: Vector) -> List[Vector]:
    out = []
    for i in range(len(args)):
        others = [a for j, a in enumerate(args) if j != i]
        out.append(reduce(np.multiply, others))
    return out


def _ones(*args: Vector) -> List[Vector]:
    return [np.ones_like(a) for a in args]


def _build_operators(max_variadic_arity: int) -> Dict[str, Operator]:
    ops = [
        Operator("add", 2, max_variadic_arity, 2,
                 lambda *a: reduce(np.add, a), _ones),
        Operator("subtract", 2, 2, 2,
                 np.subtract, lambda a, b: [np.ones_like(a), -np.ones_like(b)]),
        Operator("multiply", 2, max_variadic_arity, 3,
                 lambda *a: reduce(np.multiply, a), _product_partials),
        Operator("divide", 2, 2, 4,
                 np.divide, lambda a, b: [1.0 / b, -a / (b * b)]),
        Operator("absolute", 1, 1, 3,
                 np.abs, lambda a: [_left_branch_sign(a)]),
        Operator("arccos", 1, 1, 6,
                 np.arccos, lambda a: [-1.0 / np.sqrt(1.0 - a * a)]),
        Operator("arcsin", 1, 1, 6,
                 np.arcsin, lambda a: [1.0 / np.sqrt(1.0 - a * a)]),
        Operator("arctan", 1, 1, 6,
                 np.arctan, lambda a: [1.0 / (1.0 + a * a)]),
        Operator("cos", 1, 1, 5,
                 np.cos, lambda a: [-np.sin(a)]),
        Operator("sin", 1, 1, 5,
                 np.sin, lambda a: [np.cos(a)]),
        Operator("tan", 1, 1, 5,
                 np.tan, lambda a: [1.0 / np.cos(a) ** 2]),
        Operator("exp", 1, 1, 4,
                 np.exp, lambda a: [np.exp(a)]),
        Operator("minimum", 2, 2, 3,
                 np.minimum,
                 lambda a, b: [np.where(a <= b, 1.0, 0.0), np.where(a <= b, 0.0, 1.0)]),
        Operator("maximum", 2, 2, 3,
                 np.maximum,
                 lambda a, b: [np.where(a >= b, 1.0, 0.0), np.where(a >= b, 0.0, 1.0)]),
        Operator("log", 1, 1, 9,
                 np.log, lambda a: [1.0 / a]),
        Operator("log1p", 1, 1, 8,
                 np.log1p, lambda a: [1.0 / (1.0 + a)]),
        # Literal exp(1 + x)
        Operator("exp1p", 1, 1, 5,
                 lambda a: np.exp(1.0 + a), lambda a: [np.exp(1.0 + a)]),
        Operator("sqrtabs", 1, 1, 4,
                 lambda a: np.sqrt(np.abs(a)),
                 lambda a: [_left_branch_sign(a) * 0.5 / np.sqrt(np.abs(a))]),
        Operator("square", 1, 1, 3,
                 np.square, lambda a: [2.0 * a]),
    ]
    return {op.name: op for op in ops}


OPERATORS: Dict[str, Operator] = _build_operators(DEFAULT_MAX_VARIADIC_ARITY)


def function_set(max_variadic_arity: int = DEFAULT_MAX_VARIADIC_ARITY) -> List[Operator]:
    """The full function set, with `add`/`multiply` accepting up to `max_variadic_arity` args."""
    if max_variadic_arity == DEFAULT_MAX_VARIADIC_ARITY:
        return list(OPERATORS.values())
    if max_variadic_arity < 2:
        raise ExpressionError("max_variadic_arity must be at least 2")
    return list(_build_operators(max_variadic_arity).values())


def operators_with_arity(arity: int, operators: Sequence[Operator]) -> List[Operator]:
    return [op for op in operators if op.accepts(arity)]


def apply_operator(op: Operator, child_vectors: Sequence[Vector]) -> Vector:
    """Pointwise application; domain violations produce non-finite entries."""
    return op(*child_vectors)


class NodeKind(str, Enum):
    OPERATOR = "operator"
    VARIABLE = "variable"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Node:
    """Immutable tree node. Every node is the root of a subtree."""
    kind: NodeKind
    operator: Optional[Operator] = None
    index: int = -1
    value: float = 0.0
    children: Tuple["Node", ...] = ()
    size: int = field(init=False, compare=False, repr=False)
    depth: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == NodeKind.OPERATOR:
            if self.operator is None or not self.operator.accepts(len(self.children)):
                name = self.operator.name if self.operator else None
                raise ExpressionError(f"operator {name} cannot take {len(self.children)} children")
        elif self.children:
            raise ExpressionError("terminals have no children")
        object.__setattr__(self, "size", 1 + sum(c.size for c in self.children))
        object.__setattr__(
            self, "depth", 1 + max(c.depth for c in self.children) if self.children else 0
        )

    @property
    def is_terminal(self) -> bool:
        return self.kind != NodeKind.OPERATOR

    def with_children(self, children: Sequence["Node"]) -> "Node":
        return Node(NodeKind.OPERATOR, operator=self.operator, children=tuple(children))


def variable(index: int) -> Node:
    if index < 0:
        raise ExpressionError(f"negative variable index {index}")
    return Node(NodeKind.VARIABLE, index=index)


def constant(value: float) -> Node:
    return Node(NodeKind.CONSTANT, value=float(value))


def call(op: Union[Operator, str], *children: Node) -> Node:
    if isinstance(op, str):
        op = _lookup_operator(op)
    return Node(NodeKind.OPERATOR, operator=op, children=tuple(children))


def _lookup_operator(name: str) -> Operator:
    try:
        return OPERATORS[name]
    except KeyError:
        raise ExpressionError(f"unknown operator {name!r}") from None


@dataclass(frozen=True)
class ExpressionTree:
    """A typed operator/terminal tree; the genotype of an individual."""
    root: Node

    def __str__(self) -> str:
        return to_text(self)


def _as_node(tree: "ExpressionTree | Node") -> Node:
    return tree.root if isinstance(tree, ExpressionTree) else tree


def preorder(tree: "ExpressionTree | Node") -> Iterator[Node]:
    stack = [_as_node(tree)]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvaluationTrace:
    """Prediction vectors of every subtree, indexed by preorder position."""
    vectors: List[Vector]

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, position: int) -> Vector:
        return self.vectors[position]

    @property
    def root(self) -> Vector:
        return self.vectors[0]


def _terminal_vector(node: Node, X: np.ndarray) -> Vector:
    if node.kind == NodeKind.CONSTANT:
        return np.full(X.shape[0], node.value, dtype=float)
    if node.index >= X.shape[1]:
        raise ExpressionError(
            f"variable x_{node.index} out of range for data with {X.shape[1]} features"
        )
    return np.array(X[:, node.index], dtype=float)


def _evaluate(node: Node, X: np.ndarray, trace: Optional[List[Vector]]) -> Vector:
    if trace is not None:
        slot = len(trace)
        trace.append(None)
    if node.is_terminal:
        out = _terminal_vector(node, X)
    else:
        args = [_evaluate(child, X, trace) for child in node.children]
        out = apply_operator(node.operator, args)
    if trace is not None:
        trace[slot] = out
    return out


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ExpressionError(f"expected a 2-d input matrix, got shape {X.shape}")
    return X


def evaluate(tree: "ExpressionTree | Node", X) -> Vector:
    """Evaluate a tree on every row of X. Never raises on domain violations."""
    return _evaluate(_as_node(tree), _as_matrix(X), None)


def evaluate_with_trace(tree: "ExpressionTree | Node", X) -> EvaluationTrace:
    """Evaluate a tree, keeping the prediction vector of every node (preorder)."""
    trace: List[Vector] = []
    _evaluate(_as_node(tree), _as_matrix(X), trace)
    return EvaluationTrace(trace)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def size(tree: "ExpressionTree | Node") -> int:
    return _as_node(tree).size


def depth(tree: "ExpressionTree | Node") -> int:
    """Longest root-to-leaf path; a single node has depth 0."""
    return _as_node(tree).depth


def _complexity(node: Node) -> int:
    if node.kind == NodeKind.CONSTANT:
        return CONSTANT_COMPLEXITY
    if node.kind == NodeKind.VARIABLE:
        return VARIABLE_COMPLEXITY
    return node.operator.complexity * sum(_complexity(c) for c in node.children)


def complexity(tree: "ExpressionTree | Node") -> int:
    """Recursive complexity: operator weight times the summed complexity of its children."""
    return _complexity(_as_node(tree))


def node_depths(tree: "ExpressionTree | Node") -> List[int]:
    """Depth of every node, in preorder."""
    out = []
    stack = [(_as_node(tree), 0)]
    while stack:
        node, d = stack.pop()
        out.append(d)
        stack.extend((c, d + 1) for c in reversed(node.children))
    return out


# ---------------------------------------------------------------------------
# Positions, constants
# ---------------------------------------------------------------------------

def _check_position(node: Node, position: int) -> None:
    if not 0 <= position < node.size:
        raise ExpressionError(f"position {position} out of range for tree of size {node.size}")


def subtree(tree: "ExpressionTree | Node", position: int) -> Node:
    """The node at a preorder position."""
    node = _as_node(tree)
    _check_position(node, position)
    offset = 0
    while offset != position:
        offset += 1
        for child in node.children:
            if position < offset + child.size:
                node = child
                break
            offset += child.size
    return node


def _replace(node: Node, position: int, replacement: Node) -> Node:
    if position == 0:
        return replacement
    offset = 1
    children = list(node.children)
    for i, child in enumerate(children):
        if position < offset + child.size:
            children[i] = _replace(child, position - offset, replacement)
            return node.with_children(children)
        offset += child.size
    raise ExpressionError(f"position {position} not found")


def replace_subtree(tree: "ExpressionTree | Node", position: int,
                    replacement: "ExpressionTree | Node") -> ExpressionTree:
    """A new tree with the subtree at `position` substituted by `replacement`."""
    node = _as_node(tree)
    _check_position(node, position)
    return ExpressionTree(_replace(node, position, _as_node(replacement)))


def constants(tree: "ExpressionTree | Node") -> np.ndarray:
    """Constant values in preorder."""
    return np.array(
        [n.value for n in preorder(tree) if n.kind == NodeKind.CONSTANT], dtype=float
    )


def with_constants(tree: "ExpressionTree | Node", values: Sequence[float]) -> ExpressionTree:
    """Write constant values back at their preorder positions."""
    values = list(values)
    it = iter(values)

    def rebuild(node: Node) -> Node:
        if node.kind == NodeKind.CONSTANT:
            return constant(next(it))
        if node.is_terminal:
            return node
        return node.with_children([rebuild(c) for c in node.children])

    root = rebuild(_as_node(tree))
    if next(it, None) is not None:
        raise ExpressionError("more values than constants in the tree")
    return ExpressionTree(root)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def format_constant(value: float) -> str:
    if not np.isfinite(value):
        return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return np.format_float_positional(value, unique=True, trim="0")


def _to_text(node: Node) -> str:
    if node.kind == NodeKind.CONSTANT:
        return format_constant(node.value)
    if node.kind == NodeKind.VARIABLE:
        return f"x_{node.index}"
    return f"{node.operator.name}({', '.join(_to_text(c) for c in node.children)})"


def to_text(tree: "ExpressionTree | Node") -> str:
    return _to_text(_as_node(tree))


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?|-?inf|nan)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[(),])"
    r")"
)
_VARIABLE = re.compile(r"x_(\d+)")


class _Parser:
    def __init__(self, text: str, operators: Dict[str, Operator]):
        self.text = text
        self.operators = operators
        self.pos = 0

    def _peek(self) -> Tuple[Optional[str], str, int]:
        if self.pos >= len(self.text) or not self.text[self.pos:].strip():
            return None, "", len(self.text)
        match = _TOKEN.match(self.text, self.pos)
        start = self.pos + (len(self.text[self.pos:]) - len(self.text[self.pos:].lstrip()))
        if not match or match.lastgroup is None:
            raise ParseError(f"unexpected character {self.text[start]!r}", start)
        return match.lastgroup, match.group(match.lastgroup), start

    def _next(self) -> Tuple[Optional[str], str, int]:
        kind, value, start = self._peek()
        if kind is not None:
            self.pos = _TOKEN.match(self.text, self.pos).end()
        return kind, value, start

    def _expect(self, symbol: str) -> None:
        kind, value, start = self._next()
        if kind != "punct" or value != symbol:
            found = value or "end of input"
            raise ParseError(f"expected {symbol!r}, found {found!r}", start)

    def parse(self) -> Node:
        node = self._expression()
        kind, value, start = self._peek()
        if kind is not None:
            raise ParseError(f"trailing input {value!r}", start)
        return node

    def _expression(self) -> Node:
        kind, value, start = self._next()
        if kind == "number":
            return constant(float(value))
        if kind == "name":
            var = _VARIABLE.fullmatch(value)
            if var:
                return variable(int(var.group(1)))
            nxt, sym, _ = self._peek()
            if nxt != "punct" or sym != "(":
                raise ParseError(f"unknown terminal {value!r}", start)
            op = self.operators.get(value)
            if op is None:
                raise ParseError(f"unknown operator {value!r}", start)
            self._expect("(")
            children = [self._expression()]
            while True:
                nxt, sym, where = self._next()
                if nxt == "punct" and sym == ",":
                    children.append(self._expression())
                elif nxt == "punct" and sym == ")":
                    break
                else:
                    raise ParseError(f"expected ',' or ')', found {sym or 'end of input'!r}", where)
            if not op.accepts(len(children)):
                raise ParseError(
                    f"operator {value!r} takes {op.min_arity}..{op.max_arity} arguments, "
                    f"got {len(children)}", start)
            return Node(NodeKind.OPERATOR, operator=op, children=tuple(children))
        raise ParseError(f"unexpected {value or 'end of input'!r}", start)


def parse(text: str, max_variadic_arity: int = DEFAULT_MAX_VARIADIC_ARITY) -> ExpressionTree:
    """Parse functional notation, e.g. `multiply(x_1, add(0.5, x_0))`."""
    operators = {op.name: op for op in function_set(max_variadic_arity)}
    return ExpressionTree(_Parser(text, operators).parse())
