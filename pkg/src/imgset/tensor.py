"""Dense numeric substrate for the engine.

Tensors are plain numpy ndarrays (row-major, float32 by default, float64
selectable for verification runs).  Every public kernel validates shapes,
never mutates its inputs, and is deterministic: repeated calls with equal
inputs produce bit-identical outputs on the same platform.

Negative infinity is represented as IEEE -inf (never a large negative
sentinel) so that softmax zeroes masked keys exactly.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32
NEG_INF = -np.inf


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy a kernel's contract."""


class DegenerateAttentionRowError(ValueError):
    """Raised when a softmax row is fully masked (all -inf)."""


class Rng:
    """Seeded counter-based random stream (Philox 4x64).

    The Philox generator is counter-based and produces the same stream for
    the same seed on every platform.  Advancing the stream is the only
    state change.
    """

    def __init__(self, seed: int):
        if not (0 <= int(seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def spawn(self, index: int) -> "Rng":
        """Derive an independent sub-stream for a worker/image index."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([self.seed, int(index)]))
        )
        return child

    def randn(self, *shape: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
        return standard_normal(self, shape, dtype=dtype)

    def uniform(self) -> float:
        return float(self._gen.random())

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))


def standard_normal(rng: Rng, shape, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Standard-normal samples drawn from the seeded stream."""
    for s in shape:
        if int(s) <= 0:
            raise ShapeError(f"invalid shape {tuple(shape)}: dimensions must be positive")
    # Draw in float64 then cast so float32/float64 runs share one stream.
    out = rng._gen.standard_normal(tuple(int(s) for s in shape))
    return out.astype(dtype)


def _as_2d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit inner-dimension check."""
    a = _as_2d(a, "a")
    b = _as_2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(x: np.ndarray, additive_mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax with optional additive mask (entries 0 or -inf).

    Computed with per-row max subtraction for stability.  A row that is
    fully masked after addition raises instead of emitting NaNs.
    """
    x = _as_2d(x, "x")
    if additive_mask is not None:
        additive_mask = _as_2d(additive_mask, "additive_mask")
        if additive_mask.shape != x.shape:
            raise ShapeError(
                f"mask shape {additive_mask.shape} does not match input {x.shape}"
            )
        x = x + additive_mask
    row_max = np.max(x, axis=1, keepdims=True)
    dead = ~np.isfinite(row_max[:, 0])
    if np.any(dead):
        rows = np.nonzero(dead)[0].tolist()
        raise DegenerateAttentionRowError(f"degenerate attention row(s): {rows}")
    e = np.exp(x - row_max)
    return e / np.sum(e, axis=1, keepdims=True)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return np.asarray(a) * s


def transpose(a: np.ndarray) -> np.ndarray:
    return _as_2d(a, "a").T.copy()


def concat(tensors, axis: int = 0) -> np.ndarray:
    if not tensors:
        raise ShapeError("concat of an empty list")
    return np.concatenate([np.asarray(t) for t in tensors], axis=axis)


def slice_span(a: np.ndarray, start: int, stop: int, axis: int = 0) -> np.ndarray:
    a = np.asarray(a)
    n = a.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"span [{start},{stop}) out of bounds for axis of length {n}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)].copy()


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Layer normalization over the last axis."""
    x = np.asarray(x)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({x.shape[-1]},), "
            f"got {gain.shape} and {bias.shape}"
        )
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation (the common transformer variant)."""
    x = np.asarray(x)
    c = np.sqrt(np.asarray(2.0 / np.pi, dtype=x.dtype))
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))
