"""Dense 2-D matrices with tape-based reverse-mode differentiation.

Every value is a float64 ``numpy.ndarray`` of rank 2. Operations take
:class:`Node` handles, compute their result eagerly and append a backward
rule to the owning :class:`Tape`. A tape is walked backward exactly once.

    >>> tape = Tape()
    >>> w = tape.leaf([[2.0, 0.0]], trainable=True, name="w")
    >>> loss = cross_entropy(softmax_rows(w), 1)
    >>> grads = tape.backward(loss)
    >>> grads["w"].shape
    (1, 2)
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import kernels

LOG_EPS = 1e-12
NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf."""


class TapeError(RuntimeError):
    """The tape was used out of contract (foreign root, second backward, ...)."""


def as_matrix(value) -> np.ndarray:
    m = np.array(value, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    elif m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim}-D shape {m.shape}")
    return m


class Node:
    __slots__ = ("value", "tape", "index", "requires_grad", "name")

    def __init__(self, value, tape, index, requires_grad, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node{label} #{self.index} shape={self.value.shape}>"


class Tape:
    """Ordered record of executed operations."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._rules: list[tuple[tuple[Node, ...], Callable] | None] = []
        self._params: list[Node] = []
        self._consumed = False

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, trainable: bool = False, name: str | None = None) -> Node:
        """Register an input. Only ``trainable`` leaves receive gradients."""
        m = as_matrix(value)
        _check_finite(m, "leaf")
        if trainable:
            if name is None:
                raise TapeError("trainable leaves need a name")
            if any(p.name == name for p in self._params):
                raise TapeError(f"duplicate parameter name {name!r}")
        node = Node(m, self, len(self._nodes), trainable, name)
        self._nodes.append(node)
        self._rules.append(None)
        if trainable:
            self._params.append(node)
        return node

    def constant(self, value) -> Node:
        return self.leaf(value, trainable=False)

    def record(self, value, parents: tuple[Node, ...], rule: Callable, op: str) -> Node:
        """Append an op result; ``rule(grad_out)`` returns one gradient per parent."""
        for p in parents:
            if p.tape is not self:
                raise TapeError(f"{op}: operand belongs to a different tape")
        _check_finite(value, op)
        needs = any(p.requires_grad for p in parents)
        node = Node(value, self, len(self._nodes), needs)
        self._nodes.append(node)
        self._rules.append((parents, rule) if needs else None)
        return node

    def backward(self, root: Node) -> dict[str, np.ndarray]:
        """Return d(root)/d(param) for every trainable leaf, keyed by name.

        Parameters that do not influence ``root`` get an all-zero gradient.
        """
        if self._consumed:
            raise TapeError("tape already traversed; re-run the forward pass")
        if root.tape is not self or root.index >= len(self._nodes) or self._nodes[root.index] is not root:
            raise TapeError("root is not recorded on this tape")
        if root.value.shape != (1, 1):
            raise ShapeError(f"backward root must be a 1x1 scalar, got {root.value.shape}")
        self._consumed = True

        grads: dict[int, np.ndarray] = {root.index: np.ones((1, 1))}
        for idx in range(root.index, -1, -1):
            entry = self._rules[idx]
            g = grads.get(idx)
            if entry is None or g is None:
                continue
            parents, rule = entry
            for parent, pg in zip(parents, rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.value.shape:
                    raise ShapeError(
                        f"internal: gradient shape {pg.shape} != value shape {parent.value.shape}"
                    )
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg
        out = {}
        for p in self._params:
            g = grads.get(p.index)
            out[p.name] = np.zeros_like(p.value) if g is None else g
        return out


def _check_finite(value, op):
    if not np.isfinite(value).all():
        raise NumericError(f"{op} produced non-finite values")


def _same_shape(a: Node, b: Node, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def rule(g):
        ga = kernels.matmul(g, bv.T) if a.requires_grad else None
        gb = kernels.matmul(av.T, g) if b.requires_grad else None
        return ga, gb

    return a.tape.record(kernels.matmul(av, bv), (a, b), rule, "matmul")


def transpose(a: Node) -> Node:
    return a.tape.record(np.ascontiguousarray(a.value.T), (a,), lambda g: (g.T,), "transpose")


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    return a.tape.record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    return a.tape.record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def add_row(a: Node, row: Node) -> Node:
    """Add a 1xk row vector to every row of an nxk matrix."""
    if row.shape[0] != 1 or row.shape[1] != a.shape[1]:
        raise ShapeError(f"add_row: row {row.shape} does not broadcast over {a.shape}")
    return a.tape.record(a.value + row.value, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)), "add_row")


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return a.tape.record(a.value * c, (a,), lambda g: (g * c,), "scale")


def shift(a: Node, c: float) -> Node:
    """Add the scalar ``c`` to every entry."""
    c = float(c)
    return a.tape.record(a.value + c, (a,), lambda g: (g,), "shift")


def mul_const(a: Node, mask) -> Node:
    """Elementwise product with a fixed (non-differentiated) matrix."""
    m = as_matrix(mask)
    if m.shape != a.shape:
        raise ShapeError(f"mul_const: shapes {a.shape} and {m.shape} differ")
    return a.tape.record(a.value * m, (a,), lambda g: (g * m,), "mul_const")


def concat_cols(a: Node, b: Node) -> Node:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ ({a.shape} vs {b.shape})")
    k = a.shape[1]
    return a.tape.record(
        np.concatenate([a.value, b.value], axis=1), (a, b), lambda g: (g[:, :k], g[:, k:]), "concat_cols"
    )


def square(a: Node) -> Node:
    av = a.value
    return a.tape.record(av * av, (a,), lambda g: (2.0 * av * g,), "square")


def relu(a: Node) -> Node:
    active = (a.value > 0).astype(np.float64)
    return a.tape.record(a.value * active, (a,), lambda g: (g * active,), "relu")


def sum_all(a: Node) -> Node:
    shape = a.shape
    return a.tape.record(
        np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum_all"
    )


def mean_all(a: Node) -> Node:
    shape = a.shape
    n = a.value.size
    return a.tape.record(
        np.array([[a.value.sum() / n]]), (a,), lambda g: (np.full(shape, g[0, 0] / n),), "mean_all"
    )


def sum_rows(a: Node) -> Node:
    """Row sums as an nx1 column."""
    cols = a.shape[1]
    return a.tape.record(
        a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, cols, axis=1),), "sum_rows"
    )


def pick(a: Node, index) -> Node:
    """Column ``index[i]`` of row ``i``, as an nx1 column."""
    idx = np.asarray(index, dtype=np.int64).ravel()
    n, c = a.shape
    if idx.shape[0] != n:
        raise ShapeError(f"pick: {idx.shape[0]} indices for {n} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise IndexError(f"pick: index out of range for {c} columns")
    rows = np.arange(n)

    def rule(g):
        out = np.zeros((n, c))
        out[rows, idx] = g[:, 0]
        return (out,)

    return a.tape.record(a.value[rows, idx].reshape(n, 1), (a,), rule, "pick")


# ---------------------------------------------------------------------------
# nonlinear ops


def softmax_rows(a: Node) -> Node:
    """Row-wise softmax with max subtraction. A 1xk input is a single distribution."""
    if a.value.size == 0:
        raise ShapeError(f"softmax of an empty matrix {a.shape}")
    e = np.exp(a.value - a.value.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return a.tape.record(y, (a,), rule, "softmax_rows")


softmax_row = softmax_rows


def cross_entropy(probs: Node, gold) -> Node:
    """-log(probs[i, gold_i] + 1e-12) per row, as an nx1 column."""
    n, c = probs.shape
    idx = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if idx.shape[0] != n:
        raise ShapeError(f"cross_entropy: {idx.shape[0]} labels for {n} rows")
    if idx.min() < 0 or idx.max() >= c:
        raise IndexError(f"cross_entropy: gold label outside 0..{c - 1}")
    rows = np.arange(n)
    p = probs.value[rows, idx]

    def rule(g):
        out = np.zeros((n, c))
        out[rows, idx] = -g[:, 0] / (p + LOG_EPS)
        return (out,)

    return probs.tape.record(-np.log(p + LOG_EPS).reshape(n, 1), (probs,), rule, "cross_entropy")


def row_normalize(a: Node) -> Node:
    """Each row divided by (its Euclidean norm + 1e-12)."""
    x = a.value
    r = np.sqrt((x * x).sum(axis=1, keepdims=True))
    s = r + NORM_EPS

    def rule(g):
        xg = (x * g).sum(axis=1, keepdims=True)
        safe_r = np.where(r > 0, r, 1.0)
        corr = np.where(r > 0, xg / (s * s * safe_r), 0.0)
        return (g / s - x * corr,)

    return a.tape.record(x / s, (a,), rule, "row_normalize")


def pairwise_sqdist(u: Node, e: Node) -> Node:
    """out[b, c] = ||u_b - e_c||^2 for u (B x d) and e (C x d)."""
    if u.shape[1] != e.shape[1]:
        raise ShapeError(f"pairwise_sqdist: widths differ ({u.shape} vs {e.shape})")
    diff = u.value[:, None, :] - e.value[None, :, :]

    def rule(g):
        w = 2.0 * g[:, :, None] * diff
        return w.sum(axis=1), -w.sum(axis=0)

    return u.tape.record((diff * diff).sum(axis=2), (u, e), rule, "pairwise_sqdist")


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(f: Callable[[Tape, dict[str, Node]], Node], params: dict[str, np.ndarray],
               step: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f(tape, nodes)`` builds the scalar to differentiate from the parameter
    nodes. Relative error per coordinate is
    ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-8)``.
    """
    base = {k: as_matrix(v) for k, v in params.items()}

    def evaluate(values):
        tape = Tape()
        nodes = {k: tape.leaf(v, trainable=True, name=k) for k, v in values.items()}
        return tape, f(tape, nodes)

    tape, root = evaluate(base)
    analytic = tape.backward(root)

    def scalar(values):
        try:
            _, r = evaluate(values)
        except NumericError as exc:
            raise NumericError(f"objective became non-finite under perturbation: {exc}") from exc
        return r.item()

    worst = 0.0
    for name, value in base.items():
        for pos in np.ndindex(value.shape):
            bumped = dict(base)
            plus = value.copy()
            plus[pos] += step
            minus = value.copy()
            minus[pos] -= step
            bumped[name] = plus
            f_plus = scalar(bumped)
            bumped[name] = minus
            f_minus = scalar(bumped)
            numeric = (f_plus - f_minus) / (2.0 * step)
            ga = analytic[name][pos]
            err = abs(ga - numeric) / max(abs(ga) + abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
