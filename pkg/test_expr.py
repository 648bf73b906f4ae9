"""Tests for expression trees: evaluation, traces, metrics, text format."""
import numpy as np
import pytest

from expr import (
    OPERATORS, ExpressionError, ExpressionTree, NodeKind, ParseError, call, complexity,
    constant, constants, depth, evaluate, evaluate_with_trace, node_depths, parse,
    replace_subtree, size, subtree, to_text, variable, with_constants,
)


def tree(node):
    return ExpressionTree(node)


def test_function_set_complete():
    names = {"add", "subtract", "multiply", "divide", "absolute", "arccos", "arcsin",
             "arctan", "cos", "sin", "tan", "exp", "minimum", "maximum", "log", "log1p",
             "exp1p", "sqrtabs", "square"}
    assert set(OPERATORS) == names


def test_complexity_weights():
    expected = {
        "add": 2, "subtract": 2,
        "multiply": 3, "maximum": 3, "minimum": 3, "square": 3, "absolute": 3,
        "divide": 4, "sqrtabs": 4, "exp": 4,
        "exp1p": 5, "cos": 5, "sin": 5, "tan": 5,
        "arccos": 6, "arcsin": 6, "arctan": 6,
        "log1p": 8,
        "log": 9,
    }
    assert {name: op.complexity for name, op in OPERATORS.items()} == expected


def test_arities():
    for name, op in OPERATORS.items():
        if name in ("add", "multiply"):
            assert (op.min_arity, op.max_arity) == (2, 4)
        else:
            assert op.min_arity == op.max_arity
            assert op.min_arity in (1, 2)


def test_evaluate_examples():
    X = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(evaluate(tree(variable(0)), X), [1, 2, 3])
    X2 = np.array([[1.0], [2.0]])
    np.testing.assert_array_equal(evaluate(tree(call("add", variable(0), constant(1.0))), X2), [2, 3])
    out = evaluate(tree(call("log", variable(0))), np.array([[-1.0]]))
    assert not np.isfinite(out[0])


def test_domain_violations_do_not_raise():
    X = np.array([[0.0], [2.0]])
    assert not np.all(np.isfinite(evaluate(call("divide", constant(1.0), variable(0)), X)))
    assert np.isnan(evaluate(call("arcsin", variable(0)), X)[1])


def test_exp1p_is_literal():
    X = np.array([[0.5]])
    assert evaluate(call("exp1p", variable(0)), X)[0] == pytest.approx(np.exp(1.5))
    assert evaluate(call("log1p", variable(0)), X)[0] == pytest.approx(np.log(1.5))


def test_variable_out_of_range():
    with pytest.raises(ExpressionError):
        evaluate(tree(variable(3)), np.ones((2, 2)))


def test_trace_examples():
    X = np.array([[2.0], [3.0]])
    trace = evaluate_with_trace(tree(call("square", variable(0))), X)
    assert len(trace) == 2
    np.testing.assert_array_equal(trace[0], [4, 9])
    np.testing.assert_array_equal(trace[1], [2, 3])
    assert len(evaluate_with_trace(tree(constant(1.0)), X)) == 1


def test_trace_matches_subtrees(random_trees):
    rng = np.random.default_rng(1)
    X = rng.uniform(-2, 2, size=(20, 3))
    for t in random_trees(50, seed=3):
        trace = evaluate_with_trace(t, X)
        walk = [n for n in _independent_preorder(t.root)]
        assert len(trace) == len(walk) == size(t)
        np.testing.assert_array_equal(trace.root, evaluate(t, X))
        for position in range(size(t)):
            np.testing.assert_array_equal(trace[position], evaluate(subtree(t, position), X))


def _independent_preorder(node):
    yield node
    for child in node.children:
        yield from _independent_preorder(child)


def test_evaluation_is_pure(random_trees):
    X = np.random.default_rng(2).normal(size=(15, 3))
    for t in random_trees(20, seed=4):
        np.testing.assert_array_equal(evaluate(t, X), evaluate(t, X))


def test_size_examples():
    assert size(tree(variable(0))) == 1
    assert size(tree(call("add", variable(0), constant(1.0)))) == 3
    example = call("multiply", variable(1), variable(0), call("multiply", variable(4), variable(7)))
    assert size(tree(example)) == 6


def test_depth_examples():
    assert depth(tree(variable(0))) == 0
    assert depth(tree(call("square", variable(0)))) == 1
    assert depth(tree(call("add", call("square", variable(0)), variable(1)))) == 2


def test_complexity_examples():
    assert complexity(tree(variable(0))) == 1
    assert complexity(tree(constant(3.0))) == 2
    assert complexity(tree(call("add", variable(0), constant(1.0)))) == 6
    assert complexity(tree(call("square", call("multiply", variable(0), variable(1))))) == 18


def test_complexity_bounds_size(random_trees):
    for t in random_trees(200, seed=5):
        assert complexity(t) >= size(t)


def test_text_examples():
    assert to_text(tree(call("square", variable(5)))) == "square(x_5)"
    assert parse("square(x_5)") == tree(call("square", variable(5)))
    parsed = parse("add(0.0, x_2)")
    assert parsed == tree(call("add", constant(0.0), variable(2)))
    assert to_text(parsed) == "add(0.0, x_2)"
    assert to_text(parse("maximum(add(-15.455, x_1), square(x_5))")) == \
        "maximum(add(-15.455, x_1), square(x_5))"
    assert to_text(parse("multiply(x_1, x_7, x_0, x_4)")) == "multiply(x_1, x_7, x_0, x_4)"


def test_constants_have_fractional_digit():
    assert to_text(tree(constant(2.0))) == "2.0"
    assert to_text(tree(constant(1e-5))) == "0.00001"


def test_parse_errors():
    with pytest.raises(ParseError, match="unknown operator"):
        parse("foo(x_0)")
    with pytest.raises(ParseError) as info:
        parse("add(x_0")
    assert info.value.position == len("add(x_0")
    with pytest.raises(ParseError):
        parse("square(x_0, x_1)")
    with pytest.raises(ParseError):
        parse("x_0 x_1")
    with pytest.raises(ParseError):
        parse("")


def test_round_trip(random_trees):
    for t in random_trees(1000, seed=6):
        assert parse(to_text(t)) == t


def test_round_trip_wider_variadic():
    text = "add(x_0, x_1, x_2, x_3, x_4, x_5)"
    with pytest.raises(ParseError):
        parse(text)
    assert to_text(parse(text, max_variadic_arity=6)) == text


def test_replace_subtree_examples():
    t = tree(call("square", variable(5)))
    assert replace_subtree(t, 0, variable(1)) == tree(variable(1))
    assert replace_subtree(t, 1, variable(2)) == tree(call("square", variable(2)))
    with pytest.raises(ExpressionError):
        replace_subtree(t, 2, variable(0))


def test_replace_subtree_size_identity(random_trees):
    rng = np.random.default_rng(7)
    trees = random_trees(100, seed=8)
    for t, donor in zip(trees, reversed(trees)):
        position = int(rng.integers(size(t)))
        old = subtree(t, position)
        new = replace_subtree(t, position, donor)
        assert size(new) == size(t) - old.size + size(donor)
        assert subtree(new, position) == donor.root


def test_constants_write_back():
    t = parse("add(1.5, multiply(x_0, -2.0))")
    np.testing.assert_array_equal(constants(t), [1.5, -2.0])
    updated = with_constants(t, [3.0, 4.0])
    assert to_text(updated) == "add(3.0, multiply(x_0, 4.0))"
    assert to_text(t) == "add(1.5, multiply(x_0, -2.0))"


def test_node_depths():
    t = parse("add(square(x_0), x_1)")
    assert node_depths(t) == [0, 1, 2, 1]


def test_arity_checked():
    with pytest.raises(ExpressionError):
        call("square", variable(0), variable(1))
    with pytest.raises(ExpressionError):
        call("nope", variable(0))
    assert call("add", variable(0), variable(1)).kind == NodeKind.OPERATOR
