"""Reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations the sentence-pair networks need exist here, each with
a hand-derived adjoint: broadcast arithmetic, matmul, tanh, wide-window
unfolding, the pairwise match-score matrix, cosine / distance-based
similarity of sentence vectors, and the two cross-entropy heads.  The
graph is a plain DAG of :class:`Tensor` nodes; :func:`backward` walks it
once in reverse topological order and accumulates gradients into tensors
created with ``requires_grad=True``.

Singular points are given explicit subgradients: the derivative of a
Euclidean norm at zero is taken as 0 (equal columns in the match-score
matrix, identical sentence vectors), and cosine of a zero-norm vector is
the constant 0.  Every adjoint is verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .attention import pairwise_distances
from .convpool import col2im, im2col

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "transpose",
    "tanh",
    "scale",
    "sqsum",
    "concat_rows",
    "unfold_windows",
    "match_score_matrix",
    "cosine_pair",
    "eucsim_pair",
    "sigmoid_cross_entropy",
    "softmax_cross_entropy",
    "backward",
    "sigmoid",
    "softmax",
]


class Tensor:
    """A float64 array plus the bookkeeping to backpropagate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (have, want) in enumerate(zip(grad.shape, shape)):
        if want == 1 and have != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def back(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out, parents=(a, b), backward_fn=back)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def back(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        )

    return Tensor(out, parents=(a, b), backward_fn=back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(out, parents=(a, b), backward_fn=back)


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.data.T, parents=(a,), backward_fn=lambda g: (g.T,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, parents=(a,), backward_fn=lambda g: (g * (1.0 - out * out),))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, parents=(a,), backward_fn=lambda g: (g * c,))


def sqsum(a: Tensor) -> Tensor:
    """Sum of squared entries, as a (1, 1) tensor."""
    out = np.array([[float(np.sum(a.data * a.data))]])
    return Tensor(out, parents=(a,), backward_fn=lambda g: (2.0 * g[0, 0] * a.data,))


def concat_rows(parts: list[Tensor]) -> Tensor:
    """Stack 2-D tensors vertically (equal column counts)."""
    out = np.vstack([p.data for p in parts])
    row_counts = [p.data.shape[0] for p in parts]

    def back(g):
        grads, start = [], 0
        for n in row_counts:
            grads.append(g[start : start + n])
            start += n
        return tuple(grads)

    return Tensor(out, parents=tuple(parts), backward_fn=back)


def unfold_windows(x: Tensor, w: int) -> Tensor:
    """Differentiable :func:`convpool.im2col`."""
    s = x.data.shape[1]
    out = im2col(x.data, w)
    return Tensor(out, parents=(x,), backward_fn=lambda g: (col2im(g, w, s),))


def match_score_matrix(f0: Tensor, f1: Tensor) -> Tensor:
    """Pairwise ``1/(1+distance)`` matrix between the columns of two maps.

    At exactly-equal column pairs the distance derivative is taken as 0.
    """
    dist = pairwise_distances(f0.data, f1.data)
    out = 1.0 / (1.0 + dist)

    def back(g):
        denom = np.where(dist > 0.0, dist, 1.0)
        h = np.where(dist > 0.0, -g * out * out / denom, 0.0)
        d_f0 = f0.data * h.sum(axis=1)[None, :] - f1.data @ h.T
        d_f1 = f1.data * h.sum(axis=0)[None, :] - f0.data @ h
        return d_f0, d_f1

    return Tensor(out, parents=(f0, f1), backward_fn=back)


def cosine_pair(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two column vectors as a (1, 1) tensor.

    Zero-norm inputs yield the constant 0 with zero gradient.
    """
    uv = u.data.reshape(-1)
    vv = v.data.reshape(-1)
    nu = float(np.sqrt(np.dot(uv, uv)))
    nv = float(np.sqrt(np.dot(vv, vv)))
    if nu == 0.0 or nv == 0.0:
        return Tensor(
            np.zeros((1, 1)),
            parents=(u, v),
            backward_fn=lambda g: (np.zeros_like(u.data), np.zeros_like(v.data)),
        )
    cos = float(np.dot(uv, vv) / (nu * nv))

    def back(g):
        gs = g[0, 0]
        du = gs * (vv / (nu * nv) - cos * uv / (nu * nu))
        dv = gs * (uv / (nu * nv) - cos * vv / (nv * nv))
        return du.reshape(u.data.shape), dv.reshape(v.data.shape)

    return Tensor(np.array([[cos]]), parents=(u, v), backward_fn=back)


def eucsim_pair(u: Tensor, v: Tensor) -> Tensor:
    """``1/(1 + ||u - v||)`` of two column vectors as a (1, 1) tensor."""
    diff = (u.data - v.data).reshape(-1)
    r = float(np.sqrt(np.dot(diff, diff)))
    sim = 1.0 / (1.0 + r)

    def back(g):
        if r == 0.0:
            return np.zeros_like(u.data), np.zeros_like(v.data)
        gs = g[0, 0]
        du = -gs * sim * sim / r * diff
        return du.reshape(u.data.shape), (-du).reshape(v.data.shape)

    return Tensor(np.array([[sim]]), parents=(u, v), backward_fn=back)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (plain numpy helper)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    """Stable softmax over a flat array (plain numpy helper)."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    e = np.exp(z - z.max())
    return e / e.sum()


def sigmoid_cross_entropy(z: Tensor, label: float) -> Tensor:
    """Binary cross-entropy of a (1, 1) logit against a 0/1 label."""
    zv = float(z.data[0, 0])
    loss = float(np.logaddexp(0.0, zv) - label * zv)

    def back(g):
        p = float(sigmoid(np.array([zv]))[0])
        return (g * (p - label)).reshape(1, 1),

    return Tensor(np.array([[loss]]), parents=(z,), backward_fn=back)


def softmax_cross_entropy(z: Tensor, label: int) -> Tensor:
    """Multiclass cross-entropy of a (C, 1) logit column against a class id."""
    zv = z.data.reshape(-1)
    m = float(zv.max())
    lse = m + float(np.log(np.sum(np.exp(zv - m))))
    loss = lse - float(zv[label])

    def back(g):
        probs = softmax(zv)
        probs[label] -= 1.0
        return (g[0, 0] * probs).reshape(z.data.shape),

    return Tensor(np.array([[loss]]), parents=(z,), backward_fn=back)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        st = state.get(id(node))
        if st is None:
            state[id(node)] = 0
            for p in node._parents:
                if id(p) not in state:
                    stack.append(p)
        else:
            stack.pop()
            if st == 0:
                state[id(node)] = 1
                order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dtensor into ``.grad`` of every requires_grad leaf."""
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss tensor")
    order = _topo_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None:
                continue
            pid = id(parent)
            if pid in pending:
                pending[pid] = pending[pid] + pg
            else:
                pending[pid] = pg
