"""
gradcheck.py - Central finite-difference verification of analytic gradients
"""

from typing import Callable, Optional, Sequence

import numpy as np

from cls2det.errors import NumericalError, ShapeError
from .tensor import DiffTensor, backward, no_grad


def _scalar_value(out: DiffTensor, where: str) -> float:
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    value = out.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite function value {value} at {where}")
    return value


def grad_check_inputs(f: Callable[..., DiffTensor], inputs: Sequence[DiffTensor], eps: float = 1e-4,
                      max_coords: Optional[int] = None, seed: int = 0) -> float:
    """
    Max over all coordinates of all inputs of |analytic - numeric| / max(1, |analytic|).

    numeric = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). With max_coords set, a seeded
    random subset of coordinates per input is checked instead of all of them.
    """
    inputs = list(inputs)
    for x in inputs:
        x.grad = None
        x.requires_grad = True
    out = f(*inputs)
    _scalar_value(out, "the unperturbed point")
    backward(out)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        base = x.data
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort(rng.choice(base.size, size=max_coords, replace=False))
        try:
            for i in coords:
                values = []
                for sign in (1.0, -1.0):
                    moved = base.copy()
                    moved.flat[i] += sign * eps
                    x.data = moved
                    with no_grad():
                        values.append(_scalar_value(f(*inputs), f"coordinate {i} ({'+' if sign > 0 else '-'}eps)"))
                numeric = (values[0] - values[1]) / (2.0 * eps)
                a = analytic.flat[i]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        finally:
            x.data = base
    return worst


def grad_check(f: Callable[[DiffTensor], DiffTensor], x: DiffTensor, eps: float = 1e-4,
               max_coords: Optional[int] = None, seed: int = 0) -> float:
    """grad_check for a single-input scalar function f(x)."""
    return grad_check_inputs(f, [x], eps=eps, max_coords=max_coords, seed=seed)
