"""Central finite-difference oracle.

The checked function is re-run in float64 so the difference quotient is not
swamped by float32 rounding.  The error reported is the largest absolute
deviation divided by the largest gradient magnitude of that input.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from padkit.numcore.tensor import Tensor


def numerical_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int, eps: float = 1e-3) -> np.ndarray:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat, gflat = target.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(*[Tensor(a, dtype=np.float64) for a in base]).item()
        flat[i] = orig - eps
        fm = fn(*[Tensor(a, dtype=np.float64) for a in base]).item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray]) -> list:
    ts = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    fn(*ts).backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradients(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], eps: float = 1e-3) -> float:
    """Worst relative error over all inputs of ``fn`` (a scalar-valued function of tensors)."""
    worst = 0.0
    for i, g in enumerate(analytic_grads(fn, arrays)):
        worst = max(worst, max_relative_error(g, numerical_grad(fn, arrays, i, eps)))
    return worst
