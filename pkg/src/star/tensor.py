"""Dense float64 tensors with reverse-mode automatic differentiation.

Ops are evaluated eagerly; each result remembers its inputs and a vector-
Jacobian product, so the implicit tape is always a valid topological order.
Calling backward() accumulates into ``.grad`` without zeroing, which is what
gradient accumulation across micro-batches relies on.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

LEAKY_SLOPE = 0.01
_SOFTMAX_MASK = -1e9  # additive bias that zeroes a softmax slot exactly


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class NumericsError(FloatingPointError):
    """Raised when an op produces NaN or Inf (error state by contract)."""


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericsError(f"{op}: produced non-finite values")


class Tensor:
    """A dense float64 array plus the bookkeeping for reverse-mode autodiff.

    ``grad`` is lazily allocated and strictly accumulated: k backward passes
    leave exactly k times the single-pass gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_prev", "_vjp")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 _prev: tuple = (), _vjp: Callable | None = None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, op)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._prev = _prev
        self._vjp = _vjp

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into every reachable node's ``.grad``.

        self must be a scalar (a single element).
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward: loss must be scalar, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if child.requires_grad and id(child) not in seen:
                    stack.append((child, False))

        flowing: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            node.accumulate_grad(g)
            if node._vjp is None:
                continue
            for child, cg in zip(node._prev, node._vjp(g)):
                if cg is None or not child.requires_grad:
                    continue
                key = id(child)
                if key in flowing:
                    flowing[key] = flowing[key] + cg
                else:
                    flowing[key] = cg

    # operator sugar; everything routes through the module-level ops
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), as_tensor(-1.0)))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, as_tensor(-1.0)))

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng: np.random.Generator | None = None,
              scale: float | None = None) -> Tensor:
    """Trainable leaf. With ``rng``, draws N(0, scale^2); default scale is
    1/sqrt(fan_in) for 2-D shapes."""
    if rng is not None:
        shape = tuple(data) if isinstance(data, (tuple, list)) else data
        if scale is None:
            fan_in = shape[0] if len(shape) >= 2 else max(shape[-1], 1)
            scale = 1.0 / np.sqrt(max(fan_in, 1))
        data = rng.normal(0.0, scale, size=shape)
    return Tensor(data, requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, op: str, prev: Sequence[Tensor],
          vjp: Callable | None) -> Tensor:
    req = any(p.requires_grad for p in prev)
    return Tensor(data, requires_grad=req, op=op, _prev=tuple(prev),
                  _vjp=vjp if req else None)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} + {b.shape}") from None
    return _make(out, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} * {b.shape}") from None
    return _make(out, "mul", (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a.data @ b.data
    return _make(out, "matmul", (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected rank 2, got shape {a.shape}")
    return _make(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple) -> Tensor:
    if int(np.prod(shape)) != a.data.size and -1 not in shape:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}")
    old = a.shape
    return _make(a.data.reshape(shape), "reshape", (a,),
                 lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat: no inputs")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        shapes = [p.shape for p in parts]
        raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece)
                     for piece in np.split(g, splits, axis=axis))

    return _make(out, "concat", tuple(parts), vjp)


def lookup(table: Tensor, indices) -> Tensor:
    """Row gather: out[..., :] = table[indices[...], :]. Backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"lookup: table must be rank 2, got shape {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"lookup: index out of range for table with {table.shape[0]} rows")
    out = table.data[idx]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return (gt,)

    return _make(out, "lookup", (table,), vjp)


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    out = np.where(a.data > 0, a.data, slope * a.data)
    mask = np.where(a.data > 0, 1.0, slope)
    return _make(out, "leaky_relu", (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign for overflow-free evaluation
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericsError("log: non-positive input")
    out = np.log(a.data)
    return _make(out, "log", (a,), lambda g: (g / a.data,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = ((a.data > lo) & (a.data < hi)).astype(np.float64)
    return _make(out, "clamp", (a,), lambda g: (g * inside,))


def row_softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis. Additive -1e9 bias masks a slot exactly."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, "row_softmax", (a,), vjp)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.mean(axis=axis)
    if axis is None:
        n = a.data.size
        vjp = lambda g: (np.full_like(a.data, g / n),)
    else:
        n = a.shape[axis]
        vjp = lambda g: (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)
    return _make(out, "mean", (a,), vjp)


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.sum(axis=axis)
    if axis is None:
        vjp = lambda g: (np.full_like(a.data, g),)
    else:
        n = a.shape[axis]
        vjp = lambda g: (np.repeat(np.expand_dims(g, axis), n, axis=axis),)
    return _make(out, "sum", (a,), vjp)


def l2_normalize(a: Tensor, eps_raise: float = 1e-30) -> Tensor:
    """Normalize rows of the last axis to unit L2 norm. Zero rows are an error."""
    norm = np.linalg.norm(a.data, axis=-1, keepdims=True)
    if np.any(norm <= eps_raise):
        raise NumericsError("l2_normalize: zero-norm row")
    out = a.data / norm

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - out * dot) / norm,)

    return _make(out, "l2_normalize", (a,), vjp)


def dot_sim(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot product of two (n, d) tensors -> (n,)."""
    if a.shape != b.shape or a.data.ndim != 2:
        raise ShapeError(f"dot_sim: incompatible shapes {a.shape} . {b.shape}")
    out = (a.data * b.data).sum(axis=-1)
    return _make(out, "dot_sim", (a, b),
                 lambda g: (g[:, None] * b.data, g[:, None] * a.data))


class BatchNormState:
    """Running statistics for batch-norm eval mode (not trainable)."""

    def __init__(self, width: int, momentum: float = 0.9, eps: float = 1e-5):
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean.copy(),
                "running_var": self.running_var.copy()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.running_mean = np.asarray(arrays["running_mean"], dtype=np.float64).copy()
        self.running_var = np.asarray(arrays["running_var"], dtype=np.float64).copy()


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool) -> Tensor:
    """Batch normalization over axis 0. Train mode uses batch statistics and
    updates the running ones; eval mode reads the frozen running statistics."""
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(
            f"batch_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    eps = state.eps
    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    else:
        mu = state.running_mean
        var = state.running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data * xhat + beta.data

    if training:
        n = x.shape[0]

        def vjp(g):
            dxhat = g * gamma.data
            dx = inv / n * (n * dxhat - dxhat.sum(axis=0)
                            - xhat * (dxhat * xhat).sum(axis=0))
            return (dx, (g * xhat).sum(axis=0), g.sum(axis=0))
    else:
        def vjp(g):
            return (g * gamma.data * inv, (g * xhat).sum(axis=0), g.sum(axis=0))

    return _make(out, "batch_norm", (x, gamma, beta), vjp)


def scalar(value: float) -> Tensor:
    return Tensor(np.float64(value))


def mask_bias(valid: np.ndarray) -> np.ndarray:
    """Additive bias array: 0 where valid, -1e9 where masked."""
    return np.where(valid, 0.0, _SOFTMAX_MASK)
