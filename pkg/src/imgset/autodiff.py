"""Small reverse-mode tape used by the model for training and grad checks.

Only the operations the toy transformer needs are implemented.  Values are
numpy arrays; a Var wraps a value plus a list of (parent, vjp) edges.
Forward numerics reuse the kernels in :mod:`imgset.tensor` where one
exists, so inference and training share a single implementation.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


class Var:
    __slots__ = ("value", "grad", "_edges", "requires_grad")

    def __init__(self, value, edges=(), requires_grad=True):
        self.value = np.asarray(value)
        self.grad = None
        self._edges = tuple(edges)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    # -- graph construction helpers ------------------------------------

    def __add__(self, other):
        other = as_var(other)
        return Var(self.value + other.value,
                   [(self, lambda g: _unbroadcast(g, self.value.shape)),
                    (other, lambda g: _unbroadcast(g, other.value.shape))])

    def __sub__(self, other):
        other = as_var(other)
        return Var(self.value - other.value,
                   [(self, lambda g: _unbroadcast(g, self.value.shape)),
                    (other, lambda g: _unbroadcast(-g, other.value.shape))])

    def __mul__(self, other):
        other = as_var(other)
        return Var(self.value * other.value,
                   [(self, lambda g: _unbroadcast(g * other.value, self.value.shape)),
                    (other, lambda g: _unbroadcast(g * self.value, other.value.shape))])

    def __neg__(self):
        return Var(-self.value, [(self, lambda g: -g)])

    def __matmul__(self, other):
        other = as_var(other)
        out = T.matmul(self.value, other.value)
        return Var(out,
                   [(self, lambda g: g @ other.value.T),
                    (other, lambda g: self.value.T @ g)])

    # -- backward ------------------------------------------------------

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order = _toposort(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in order:
            if node.grad is None:
                continue
            for parent, vjp in node._edges:
                contrib = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = contrib.copy()
                else:
                    parent.grad = parent.grad + contrib


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x), requires_grad=False)


def _toposort(root: Var):
    seen = set()
    order = []

    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._edges:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- shape ops ---------------------------------------------------------


def reshape(x: Var, shape) -> Var:
    old = x.value.shape
    return Var(x.value.reshape(shape), [(x, lambda g: g.reshape(old))])


def transpose(x: Var, axes) -> Var:
    inv = np.argsort(axes)
    return Var(np.transpose(x.value, axes),
               [(x, lambda g: np.transpose(g, inv))])


def concat_rows(vars_, axis: int = 0) -> Var:
    vals = [v.value for v in vars_]
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate(vals, axis=axis)

    def make_vjp(i):
        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(idx)]
        return vjp

    return Var(out, [(v, make_vjp(i)) for i, v in enumerate(vars_)])


def slice_rows(x: Var, start: int, stop: int, axis: int = 0) -> Var:
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def vjp(g):
        out = np.zeros_like(x.value)
        out[idx] = g
        return out

    return Var(x.value[idx], [(x, vjp)])


def gather_rows(table: Var, ids) -> Var:
    """Embedding lookup: rows of `table` selected by integer ids."""
    ids = np.asarray(ids, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(table.value)
        np.add.at(out, ids, g)
        return out

    return Var(table.value[ids], [(table, vjp)])


# -- nonlinearities / normalization ------------------------------------


def gelu(x: Var) -> Var:
    v = x.value
    c = np.sqrt(np.asarray(2.0 / np.pi, dtype=v.dtype))
    inner = c * (v + 0.044715 * v**3)
    th = np.tanh(inner)
    out = T.gelu(v)

    def vjp(g):
        sech2 = 1.0 - th * th
        d = 0.5 * (1.0 + th) + 0.5 * v * sech2 * c * (1.0 + 3 * 0.044715 * v * v)
        return g * d

    return Var(out, [(x, vjp)])


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = 1e-5) -> Var:
    v = x.value
    mu = np.mean(v, axis=-1, keepdims=True)
    diff = v - mu
    var = np.mean(diff * diff, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = diff * inv
    out = xhat * gain.value + bias.value
    n = v.shape[-1]

    def vjp_x(g):
        gx = g * gain.value
        return inv * (gx - np.mean(gx, axis=-1, keepdims=True)
                      - xhat * np.mean(gx * xhat, axis=-1, keepdims=True))

    def vjp_gain(g):
        return np.sum(g * xhat, axis=tuple(range(v.ndim - 1)))

    def vjp_bias(g):
        return np.sum(g, axis=tuple(range(v.ndim - 1)))

    _ = n
    return Var(out, [(x, vjp_x), (gain, vjp_gain), (bias, vjp_bias)])


def softmax_masked(logits: Var, additive_mask: np.ndarray | None) -> Var:
    """Softmax over the last axis with a constant additive mask.

    Mask entries are 0 or -inf; a fully masked row raises, mirroring
    :func:`imgset.tensor.softmax_rows`.
    """
    z = logits.value
    if additive_mask is not None:
        z = z + additive_mask
    row_max = np.max(z, axis=-1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise T.DegenerateAttentionRowError("degenerate attention row in masked softmax")
    e = np.exp(z - row_max)
    y = e / np.sum(e, axis=-1, keepdims=True)

    def vjp(g):
        return y * (g - np.sum(g * y, axis=-1, keepdims=True))

    return Var(y, [(logits, vjp)])


# -- batched attention contractions ------------------------------------


def qk_scores(q: Var, k: Var) -> Var:
    """(H,T,d) x (H,S,d) -> (H,T,S)."""
    out = np.einsum("htd,hsd->hts", q.value, k.value)
    return Var(out,
               [(q, lambda g: np.einsum("hts,hsd->htd", g, k.value)),
                (k, lambda g: np.einsum("hts,htd->hsd", g, q.value))])


def attn_values(w: Var, v: Var) -> Var:
    """(H,T,S) x (H,S,d) -> (H,T,d)."""
    out = np.einsum("hts,hsd->htd", w.value, v.value)
    return Var(out,
               [(w, lambda g: np.einsum("htd,hsd->hts", g, v.value)),
                (v, lambda g: np.einsum("hts,htd->hsd", w.value, g))])


# -- reductions --------------------------------------------------------


def mean_squared_error(pred: Var, target: np.ndarray) -> Var:
    diff = pred.value - target
    n = diff.size
    out = np.asarray(np.mean(diff * diff))

    def vjp(g):
        return g * 2.0 * diff / n

    return Var(out, [(pred, vjp)])
