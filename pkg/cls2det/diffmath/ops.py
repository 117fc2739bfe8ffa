"""
ops.py - Differentiable primitives: pointwise math, reductions, softened distributions, shape ops

Binary operands must have equal shapes, or one of them is a scalar
(a Python number or a 0-d DiffTensor). Nothing else broadcasts.
"""

from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from cls2det.errors import DomainError, ShapeError
from .tensor import DiffTensor, Number, as_tensor, record

Operand = Union[DiffTensor, Number]


def _operands(a: Operand, b: Operand) -> Tuple[DiffTensor, DiffTensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"operands not broadcast-compatible: {a.shape} vs {b.shape}")
    return a, b


def _reduce_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a: Operand, b: Operand) -> DiffTensor:
    a, b = _operands(a, b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a: Operand, b: Operand) -> DiffTensor:
    a, b = _operands(a, b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a: Operand, b: Operand) -> DiffTensor:
    a, b = _operands(a, b)
    return record("mul", a.data * b.data, (a, b),
                  lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)))


def scale(a: DiffTensor, c: float) -> DiffTensor:
    c = float(c)
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def neg(a: DiffTensor) -> DiffTensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a: DiffTensor) -> DiffTensor:
    if np.any(a.data <= 0):
        raise DomainError(f"log of non-positive input (min {a.data.min():.3g})")
    return record("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a: DiffTensor) -> DiffTensor:
    mask = a.data > 0
    return record("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def absolute(a: DiffTensor) -> DiffTensor:
    return record("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def power(a: DiffTensor, k: float) -> DiffTensor:
    k = float(k)
    if k == 0.0:
        return record("power", np.ones_like(a.data), (a,), lambda g: (np.zeros_like(g),))
    return record("power", a.data ** k, (a,), lambda g: (g * k * a.data ** (k - 1.0),))


def clip(a: DiffTensor, lo: float, hi: float) -> DiffTensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return record("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def smooth_l1(a: DiffTensor, beta: float = 1.0) -> DiffTensor:
    x = a.data
    small = np.abs(x) < beta
    out = np.where(small, 0.5 * x * x / beta, np.abs(x) - 0.5 * beta)
    return record("smooth_l1", out, (a,), lambda g: (g * np.where(small, x / beta, np.sign(x)),))


def _check_temperature(T: float) -> float:
    T = float(T)
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T}")
    return T


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_t(z: DiffTensor, T: float = 1.0) -> DiffTensor:
    """(1 + exp(-z/T))^-1 elementwise, using the exp(x)/(1+exp(x)) branch for negative x."""
    T = _check_temperature(T)
    p = _stable_sigmoid(z.data / T)
    return record("sigmoid_t", p, (z,), lambda g: (g * p * (1.0 - p) / T,))


def log_sigmoid_t(z: DiffTensor, T: float = 1.0) -> DiffTensor:
    """log sigmoid(z/T) = -softplus(-z/T); finite for every finite z."""
    T = _check_temperature(T)
    x = z.data / T
    out = -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))
    p = _stable_sigmoid(x)
    return record("log_sigmoid_t", out, (z,), lambda g: (g * (1.0 - p) / T,))


def softmax_t(z: DiffTensor, T: float = 1.0) -> DiffTensor:
    """Softmax of z/T over the last axis, with max-subtraction."""
    T = _check_temperature(T)
    x = z.data / T
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)) / T,)

    return record("softmax_t", p, (z,), backward)


def log_softmax_t(z: DiffTensor, T: float = 1.0) -> DiffTensor:
    T = _check_temperature(T)
    x = z.data / T
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        return ((g - p * g.sum(axis=-1, keepdims=True)) / T,)

    return record("log_softmax_t", out, (z,), backward)


def _normalize_axes(axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} invalid for a {ndim}-d tensor")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ShapeError(f"repeated axes {tuple(axes)}")
    return tuple(sorted(out))


def reduce(x: DiffTensor, axes=None, mode: str = "sum") -> DiffTensor:
    """
    Sum, mean or max over `axes` (None = all). Reduced axes are dropped.
    max routes the gradient to the first maximal element in row-major order.
    """
    axes = _normalize_axes(axes, x.ndim)
    kept = [d for d in range(x.ndim) if d not in axes]
    out_shape = tuple(x.shape[d] for d in kept)
    n = int(np.prod([x.shape[d] for d in axes])) if axes else 1

    if mode == "sum":
        out = x.data.sum(axis=axes) if axes else x.data.copy()
        return record("sum", out, (x,),
                      lambda g: (np.broadcast_to(np.expand_dims(g, axes), x.shape).copy(),))
    if mode == "mean":
        out = x.data.sum(axis=axes) / n if axes else x.data.copy()
        return record("mean", out, (x,),
                      lambda g: (np.broadcast_to(np.expand_dims(g, axes) / n, x.shape).copy(),))
    if mode == "max":
        perm = kept + list(axes)
        moved = x.data.transpose(perm).reshape(out_shape + (n,))
        arg = moved.argmax(axis=-1)
        out = np.take_along_axis(moved, arg[..., None], axis=-1)[..., 0]

        def backward(g):
            flat = np.zeros(out_shape + (n,))
            np.put_along_axis(flat, arg[..., None], np.asarray(g)[..., None], axis=-1)
            moved_shape = tuple(x.shape[d] for d in perm)
            return (flat.reshape(moved_shape).transpose(np.argsort(perm)),)

        return record("max", out, (x,), backward)
    raise ShapeError(f"unknown reduce mode {mode!r}")


def sum_(x: DiffTensor, axes=None) -> DiffTensor:
    return reduce(x, axes, "sum")


def mean(x: DiffTensor, axes=None) -> DiffTensor:
    return reduce(x, axes, "mean")


def max_(x: DiffTensor, axes=None) -> DiffTensor:
    return reduce(x, axes, "max")


def reshape(x: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from e
    return record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: DiffTensor, axes: Sequence[int]) -> DiffTensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for a {x.ndim}-d tensor")
    inverse = tuple(np.argsort(axes))
    return record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def index(x: DiffTensor, key) -> DiffTensor:
    """x[key] for basic and integer-array keys; repeated indices accumulate in backward."""
    if isinstance(key, DiffTensor):
        raise ShapeError("index keys must be constants")

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return record("index", x.data[key], (x,), backward)


def take(x: DiffTensor, indices, axis: int = 0) -> DiffTensor:
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim

    def backward(g):
        full = np.zeros_like(x.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return record("take", np.take(x.data, indices, axis=axis), (x,), backward)


def concat(tensors: Iterable[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tensors, backward)


def stack(tensors: Iterable[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack of an empty sequence")
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from e
    ax = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return record("stack", out, tensors, backward)


def constant(value, like: Optional[DiffTensor] = None) -> DiffTensor:
    if like is not None:
        return DiffTensor(np.full(like.shape, float(value)))
    return DiffTensor(value)
