"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .tensor import ComputationTape, Tensor

DEFAULT_STEP = 1e-5
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-7


@dataclass(frozen=True)
class GradientCheckResult:
    max_abs_error: float
    max_rel_error: float
    checked: int
    passed: bool


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float) -> np.ndarray:
    tensor.data = np.ascontiguousarray(tensor.data)
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = fn().item()
        flat[i] = original - step
        minus = fn().item()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * step)
    return grad


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> GradientCheckResult:
    """
    Compare tape gradients of scalar ``fn()`` against central differences for each of
    ``tensors``.

    ``fn`` must rebuild its graph from the tensors' current values on every call. An entry passes
    when ``|analytic - numeric| <= atol + rtol * max(|analytic|, |numeric|)``.
    """
    with ComputationTape() as tape:
        loss = fn()
    grads = tape.backward(loss)

    max_abs = 0.0
    max_rel = 0.0
    passed = True
    checked = 0
    for tensor in tensors:
        analytic = grads[tensor]
        numeric = numerical_gradient(fn, tensor, step)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        passed = passed and bool(np.all(diff <= atol + rtol * scale))
        max_abs = max(max_abs, float(diff.max(initial=0.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > atol, diff / scale, 0.0)
        max_rel = max(max_rel, float(rel.max(initial=0.0)))
        checked += tensor.size
    return GradientCheckResult(
        max_abs_error=max_abs, max_rel_error=max_rel, checked=checked, passed=passed
    )
