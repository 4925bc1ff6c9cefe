"""Reverse-mode differentiation over dense float64 matrices.

A :class:`Tape` records every operation of one forward pass in topological
order; :meth:`Tape.backward` sweeps it in reverse and returns the gradient
of a scalar loss with respect to every recorded node.  The op set is the
small one the forecasting model needs, nothing more.

    >>> tape = Tape()
    >>> x = tape.leaf([[2.0]])
    >>> y = tape.leaf([[5.0]])
    >>> grads = tape.backward(sum_all(hadamard(x, y)))
    >>> grads[x], grads[y]
    (array([[5.]]), array([[2.]]))
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from .exceptions import ContractError, NumericError, ShapeError

__all__ = [
    "Tape",
    "Var",
    "Gradients",
    "OP_KINDS",
    "matmul",
    "add",
    "sub",
    "scale",
    "hadamard",
    "tanh",
    "sigmoid",
    "gather_rows",
    "scatter_mean_rows",
    "row_softmax_cross_entropy",
    "sum_all",
    "transpose",
    "concat_rows",
    "row_kron",
    "grad_check",
]


@dataclass
class _Node:
    kind: str
    inputs: tuple[int, ...]
    value: np.ndarray
    attrs: dict[str, Any] = field(default_factory=dict)


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "node_id")

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape._nodes[self.node_id].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self):
        kind = self.tape._nodes[self.node_id].kind
        return f"Var(id={self.node_id}, kind={kind!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            if other.shape == (1, 1) and self.shape != (1, 1):
                return scale(self, other)
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Gradients(dict):
    """``node_id -> gradient`` mapping; unreachable nodes read as zeros."""

    def __init__(self, tape: Tape, grads: dict[int, np.ndarray]):
        super().__init__(grads)
        self._tape = tape

    def __getitem__(self, key):
        node_id = key.node_id if isinstance(key, Var) else key
        if dict.__contains__(self, node_id):
            return dict.__getitem__(self, node_id)
        return np.zeros_like(self._tape._nodes[node_id].value)

    def __contains__(self, key):
        node_id = key.node_id if isinstance(key, Var) else key
        return 0 <= node_id < len(self._tape._nodes)


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got array with ndim={arr.ndim}")
    return arr


# --- forward / backward rules -------------------------------------------
# Each rule: fwd(values, attrs) -> value; bwd(g, values, out, attrs) -> input grads.


def _check_rowbroadcast(a, b, kind):
    if a.shape != b.shape and not (b.shape[0] == 1 and b.shape[1] == a.shape[1]):
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not conform")


def _fwd_matmul(vals, attrs):
    a, b = vals
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    return a @ b


def _bwd_matmul(g, vals, out, attrs):
    a, b = vals
    return [g @ b.T, a.T @ g]


def _fwd_add(vals, attrs):
    a, b = vals
    _check_rowbroadcast(a, b, "add")
    return a + b


def _reduce_broadcast(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def _bwd_add(g, vals, out, attrs):
    return [g, _reduce_broadcast(g, vals[1].shape)]


def _fwd_sub(vals, attrs):
    a, b = vals
    _check_rowbroadcast(a, b, "sub")
    return a - b


def _bwd_sub(g, vals, out, attrs):
    return [g, -_reduce_broadcast(g, vals[1].shape)]


def _fwd_scale(vals, attrs):
    if len(vals) == 1:
        return vals[0] * attrs["factor"]
    x, c = vals
    if c.shape != (1, 1):
        raise ShapeError(f"scale: factor must be 1x1, got {c.shape}")
    return x * c[0, 0]


def _bwd_scale(g, vals, out, attrs):
    if len(vals) == 1:
        return [g * attrs["factor"]]
    x, c = vals
    return [g * c[0, 0], np.array([[np.sum(g * x)]])]


def _fwd_hadamard(vals, attrs):
    a, b = vals
    _check_rowbroadcast(a, b, "hadamard")
    return a * b


def _bwd_hadamard(g, vals, out, attrs):
    a, b = vals
    return [g * b, _reduce_broadcast(g * a, b.shape)]


def _fwd_tanh(vals, attrs):
    return np.tanh(vals[0])


def _bwd_tanh(g, vals, out, attrs):
    return [g * (1.0 - out * out)]


def _fwd_sigmoid(vals, attrs):
    x = vals[0]
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _bwd_sigmoid(g, vals, out, attrs):
    return [g * out * (1.0 - out)]


def _fwd_gather(vals, attrs):
    x = vals[0]
    idx = attrs["index"]
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {x.shape[0]} rows")
    return x[idx]


def _bwd_gather(g, vals, out, attrs):
    gx = np.zeros_like(vals[0])
    np.add.at(gx, attrs["index"], g)
    return [gx]


def _fwd_scatter_mean(vals, attrs):
    return attrs["operator"] @ vals[0]


def _bwd_scatter_mean(g, vals, out, attrs):
    return [np.asarray(attrs["operator"].T @ g)]


def _fwd_softmax_ce(vals, attrs):
    logits = vals[0]
    targets = attrs["targets"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(logits.shape[0])
    nll = log_z - shifted[rows, targets]
    return np.array([[nll.mean()]])


def _bwd_softmax_ce(g, vals, out, attrs):
    logits = vals[0]
    targets = attrs["targets"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(logits.shape[0]), targets] -= 1.0
    return [p * (g[0, 0] / logits.shape[0])]


def _fwd_sum(vals, attrs):
    return np.array([[vals[0].sum()]])


def _bwd_sum(g, vals, out, attrs):
    return [np.full_like(vals[0], g[0, 0])]


def _fwd_transpose(vals, attrs):
    return vals[0].T.copy()


def _bwd_transpose(g, vals, out, attrs):
    return [g.T]


def _fwd_concat(vals, attrs):
    cols = {v.shape[1] for v in vals}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ {sorted(cols)}")
    return np.concatenate(vals, axis=0)


def _bwd_concat(g, vals, out, attrs):
    bounds = np.cumsum([0] + [v.shape[0] for v in vals])
    return [g[bounds[i] : bounds[i + 1]] for i in range(len(vals))]


def _fwd_row_kron(vals, attrs):
    a, b = vals
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row_kron: row counts differ {a.shape} vs {b.shape}")
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _bwd_row_kron(g, vals, out, attrs):
    a, b = vals
    g3 = g.reshape(a.shape[0], a.shape[1], b.shape[1])
    return [np.einsum("nij,nj->ni", g3, b), np.einsum("nij,ni->nj", g3, a)]


_RULES: dict[str, tuple[Callable, Callable]] = {
    "matmul": (_fwd_matmul, _bwd_matmul),
    "add": (_fwd_add, _bwd_add),
    "sub": (_fwd_sub, _bwd_sub),
    "scale": (_fwd_scale, _bwd_scale),
    "hadamard": (_fwd_hadamard, _bwd_hadamard),
    "tanh": (_fwd_tanh, _bwd_tanh),
    "sigmoid": (_fwd_sigmoid, _bwd_sigmoid),
    "gather_rows": (_fwd_gather, _bwd_gather),
    "scatter_mean_rows": (_fwd_scatter_mean, _bwd_scatter_mean),
    "row_softmax_cross_entropy": (_fwd_softmax_ce, _bwd_softmax_ce),
    "sum": (_fwd_sum, _bwd_sum),
    "transpose": (_fwd_transpose, _bwd_transpose),
    "concat_rows": (_fwd_concat, _bwd_concat),
    "row_kron": (_fwd_row_kron, _bwd_row_kron),
}

OP_KINDS = frozenset(_RULES)


class Tape:
    """Ordered record of one forward computation.

    Values are never mutated after recording.  Build a fresh tape per
    forward pass; the graph topology changes with every snapshot.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self):
        return len(self._nodes)

    def leaf(self, value, name: str | None = None) -> Var:
        arr = _as_matrix(value)
        arr.setflags(write=False)
        self._nodes.append(_Node("leaf", (), arr, {"name": name}))
        return Var(self, len(self._nodes) - 1)

    def record(self, kind: str, inputs: list[Var], **attrs) -> Var:
        try:
            fwd = _RULES[kind][0]
        except KeyError:
            raise ContractError(f"unknown op kind {kind!r}") from None
        for v in inputs:
            if v.tape is not self:
                raise ContractError("input variable belongs to a different tape")
        value = fwd([v.value for v in inputs], attrs)
        value.setflags(write=False)
        self._nodes.append(_Node(kind, tuple(v.node_id for v in inputs), value, attrs))
        return Var(self, len(self._nodes) - 1)

    def backward(self, loss: Var) -> Gradients:
        """Gradient of the 1x1 ``loss`` with respect to every node."""
        if loss.tape is not self:
            raise ContractError("loss belongs to a different tape")
        if loss.shape != (1, 1):
            raise ContractError(f"loss must be 1x1, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
        for node_id in range(loss.node_id, -1, -1):
            g = grads.get(node_id)
            if g is None:
                continue
            node = self._nodes[node_id]
            if not node.inputs:
                continue
            vals = [self._nodes[i].value for i in node.inputs]
            in_grads = _RULES[node.kind][1](g, vals, node.value, node.attrs)
            for i, gi in zip(node.inputs, in_grads):
                if i in grads:
                    grads[i] = grads[i] + gi
                else:
                    grads[i] = gi
        return Gradients(self, grads)


# --- functional op wrappers ------------------------------------------------


def matmul(a: Var, b: Var) -> Var:
    return a.tape.record("matmul", [a, b])


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; ``b`` may also be a single row broadcast over ``a``."""
    return a.tape.record("add", [a, b])


def sub(a: Var, b: Var) -> Var:
    return a.tape.record("sub", [a, b])


def scale(x: Var, factor) -> Var:
    """Multiply by a constant float or by a trainable 1x1 variable."""
    if isinstance(factor, Var):
        return x.tape.record("scale", [x, factor])
    return x.tape.record("scale", [x], factor=float(factor))


def hadamard(a: Var, b: Var) -> Var:
    """Elementwise product; ``b`` may be a single row broadcast over ``a``."""
    return a.tape.record("hadamard", [a, b])


def tanh(x: Var) -> Var:
    return x.tape.record("tanh", [x])


def sigmoid(x: Var) -> Var:
    return x.tape.record("sigmoid", [x])


def gather_rows(x: Var, index) -> Var:
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    return x.tape.record("gather_rows", [x], index=index)


def mean_operator(index, n_rows: int, weights=None) -> sp.csr_matrix:
    """Sparse ``n_rows x len(index)`` matrix averaging rows by group.

    Group sizes count multiplicity; empty groups produce zero rows.
    """
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= n_rows):
        raise IndexError(f"scatter index out of range for {n_rows} rows")
    counts = np.bincount(index, minlength=n_rows).astype(np.float64)
    data = 1.0 / counts[index] if index.size else np.zeros(0)
    if weights is not None:
        data = data * np.asarray(weights, dtype=np.float64).reshape(-1)
    cols = np.arange(index.size)
    return sp.csr_matrix((data, (index, cols)), shape=(n_rows, index.size))


def scatter_mean_rows(x: Var, index, n_rows: int, weights=None, operator=None) -> Var:
    """``out[i] = mean over {e : index[e] == i} of weights[e] * x[e]``.

    ``operator`` may carry a prebuilt :func:`mean_operator` to skip
    reconstruction when the same grouping is reused.
    """
    if operator is None:
        operator = mean_operator(index, n_rows, weights)
    if operator.shape[1] != x.shape[0]:
        raise ShapeError(
            f"scatter_mean_rows: {x.shape[0]} rows for {operator.shape[1]} indices"
        )
    return x.tape.record("scatter_mean_rows", [x], operator=operator)


def row_softmax_cross_entropy(logits: Var, targets) -> Var:
    """Mean over rows of the negative log softmax probability of ``targets``."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size != logits.shape[0]:
        raise ShapeError("one target per logits row required")
    if targets.size == 0:
        raise ContractError("empty batch")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise IndexError("target column out of range")
    return logits.tape.record("row_softmax_cross_entropy", [logits], targets=targets)


def sum_all(x: Var) -> Var:
    return x.tape.record("sum", [x])


def transpose(x: Var) -> Var:
    return x.tape.record("transpose", [x])


def concat_rows(*parts: Var) -> Var:
    return parts[0].tape.record("concat_rows", list(parts))


def row_kron(a: Var, b: Var) -> Var:
    """Row-wise Kronecker product: ``out[n] = kron(a[n], b[n])``."""
    return a.tape.record("row_kron", [a, b])


def grad_check(f, x, eps: float = 1e-6, grad=None) -> float:
    """Compare an analytic gradient with central finite differences.

    ``f(x)`` maps a flat float vector to the objective.  When ``grad`` is
    None, ``f(x)`` must instead return ``(value, gradient)``; only the value
    is used for the finite differences.  Returns
    ``max_i |g_i - fd_i| / max(1e-12, |g_i| + |fd_i|)``.
    """
    x = np.array(x, dtype=np.float64).reshape(-1)

    def value_of(point):
        out = f(point)
        return float(out[0] if isinstance(out, tuple) else out)

    if grad is None:
        value, grad = f(x)
    else:
        value = value_of(x)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    if grad.shape != x.shape:
        raise ShapeError(f"gradient has {grad.size} entries for {x.size} coordinates")
    if not np.isfinite(value):
        raise NumericError("objective is not finite at x")
    fd = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += eps
        xm = x.copy()
        xm[i] -= eps
        fp = value_of(xp)
        fm = value_of(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"objective not finite near coordinate {i}")
        fd[i] = (fp - fm) / (2.0 * eps)
    denom = np.maximum(1e-12, np.abs(grad) + np.abs(fd))
    return float(np.max(np.abs(grad - fd) / denom)) if x.size else 0.0
