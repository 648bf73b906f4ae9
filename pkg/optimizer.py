"""
Levenberg-Marquardt fitting of the constant nodes of an expression tree.
Jacobians are computed by forward-mode propagation of (value, gradient) pairs.
"""
import logging
import math
from typing import Tuple, Union

import numpy as np

from expr import (
    ExpressionTree, Node, NodeKind, Vector, apply_operator, constants, evaluate,
    with_constants,
)

logger = logging.getLogger(__name__)

LAMBDA_INIT = 1e-3
LAMBDA_FACTOR = 10.0
LAMBDA_MAX = 1e16
MIN_RELATIVE_IMPROVEMENT = 1e-9
DEFAULT_MAX_ITER = 20

Tree = Union[ExpressionTree, Node]


def mse(prediction: Vector, y: Vector) -> float:
    """Mean squared error; any non-finite prediction gives +inf."""
    prediction = np.asarray(prediction, dtype=float)
    if prediction.size == 0 or not np.all(np.isfinite(prediction)):
        return math.inf
    with np.errstate(all="ignore"):
        value = float(np.mean((prediction - y) ** 2))
    return value if math.isfinite(value) else math.inf


def _check_theta(tree: Tree, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    expected = len(constants(tree))
    if theta.shape != (expected,):
        raise ValueError(f"expected {expected} parameters, got shape {theta.shape}")
    return theta


def residuals(tree: Tree, theta, X, y) -> Vector:
    """f(x_i; theta) - y_i with theta written into the tree's constants."""
    theta = _check_theta(tree, theta)
    with np.errstate(all="ignore"):
        return evaluate(with_constants(tree, theta), X) - np.asarray(y, dtype=float)


def _forward(node: Node, X: np.ndarray, theta: np.ndarray, counter: list) -> Tuple[Vector, np.ndarray]:
    n, p = X.shape[0], theta.shape[0]
    if node.kind == NodeKind.CONSTANT:
        k = counter[0]
        counter[0] += 1
        grad = np.zeros((n, p))
        grad[:, k] = 1.0
        return np.full(n, theta[k]), grad
    if node.kind == NodeKind.VARIABLE:
        return evaluate(node, X), np.zeros((n, p))

    values, grads = [], []
    for child in node.children:
        value, grad = _forward(child, X, theta, counter)
        values.append(value)
        grads.append(grad)
    out = apply_operator(node.operator, values)
    with np.errstate(all="ignore"):
        partials = node.operator.partials(*values)
        grad = np.zeros((n, p))
        for partial, child_grad in zip(partials, grads):
            # Parameters outside this child contribute nothing, even where the partial blows up
            grad += np.where(child_grad != 0, partial[:, None] * child_grad, 0.0)
    return out, grad


def jacobian(tree: Tree, theta, X) -> np.ndarray:
    """n x p matrix of d f(x_i; theta) / d theta_k, by forward-mode propagation."""
    theta = _check_theta(tree, theta)
    root = tree.root if isinstance(tree, ExpressionTree) else tree
    X = np.asarray(X, dtype=float)
    _, grad = _forward(root, X, theta, [0])
    return grad


def fit_constants(tree: Tree, X, y, max_iter: int = DEFAULT_MAX_ITER) -> Tuple[ExpressionTree, float]:
    """
    Fit the tree's constants to (X, y) with Levenberg-Marquardt.

    Args:
        tree: Tree whose constants are the parameters (preorder)
        X: Training inputs
        y: Training targets
        max_iter: Iteration budget

    Returns:
        Copy of the tree with the best constants found, and its training MSE
    """
    tree = tree if isinstance(tree, ExpressionTree) else ExpressionTree(tree)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = constants(tree)
    n = y.shape[0]

    if theta.size == 0:
        return tree, mse(evaluate(tree, X), y)

    r = residuals(tree, theta, X, y)
    if not np.all(np.isfinite(r)):
        return tree, math.inf
    sse = float(r @ r)
    if not math.isfinite(sse):
        return tree, math.inf
    lam = LAMBDA_INIT
    J = None

    for iteration in range(max_iter):
        if sse == 0.0:
            break
        if J is None:
            J = jacobian(tree, theta, X)
            if not np.all(np.isfinite(J)):
                logger.debug("non-finite jacobian, stopping LM")
                break
            JtJ = J.T @ J
            g = J.T @ r
            if not (np.all(np.isfinite(JtJ)) and np.all(np.isfinite(g))):
                logger.debug("normal equations overflow, stopping LM")
                break
        A = JtJ + lam * np.diag(np.diag(JtJ))
        # lstsq does not return on non-finite input
        if not np.all(np.isfinite(A)):
            logger.debug("damped system overflow, stopping LM")
            break
        try:
            delta = np.linalg.lstsq(A, -g, rcond=None)[0]
        except np.linalg.LinAlgError:
            logger.debug("LM normal equations failed to solve")
            break
        candidate = theta + delta
        sse_new = math.inf
        if np.all(np.isfinite(candidate)):
            r_new = residuals(tree, candidate, X, y)
            if np.all(np.isfinite(r_new)):
                sse_new = float(r_new @ r_new)

        if sse_new < sse:
            improvement = (sse - sse_new) / sse
            theta, r, sse = candidate, r_new, sse_new
            lam /= LAMBDA_FACTOR
            J = None
            if improvement < MIN_RELATIVE_IMPROVEMENT:
                break
            if np.linalg.norm(delta) <= 1e-12 * (np.linalg.norm(theta) + 1e-12):
                break
        else:
            lam *= LAMBDA_FACTOR
            if lam > LAMBDA_MAX:
                logger.debug(f"LM damping overflow after {iteration + 1} iterations")
                break

    return with_constants(tree, theta), sse / n
