"""Gradient-descent updates: functional steps plus stateful optimizer wrappers."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeMismatchError
from .tensor import GradientMap, Parameter

DEFAULT_LEARNING_RATE = 1e-3


@dataclass(frozen=True)
class AdamHyper:
    lr: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates per parameter name and the step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _grad_for(name: str, value: np.ndarray, grads: Mapping[str, np.ndarray]) -> np.ndarray:
    grad = grads.get(name)
    if grad is None:
        return np.zeros_like(value)
    if grad.shape != value.shape:
        raise ShapeMismatchError(f"optimizer step ({name})", value.shape, grad.shape)
    return grad


def sgd_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float
) -> dict[str, np.ndarray]:
    """``w - lr * g`` per parameter; missing gradients count as zero."""
    return {name: value - lr * _grad_for(name, value, grads) for name, value in params.items()}


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper = AdamHyper(),
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new parameters and a new state."""
    step = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    correction1 = 1.0 - hyper.beta1**step
    correction2 = 1.0 - hyper.beta2**step
    for name, value in params.items():
        grad = _grad_for(name, value, grads)
        m = hyper.beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - hyper.beta1) * grad
        v = hyper.beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - hyper.beta2) * grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = value - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=step, m=new_m, v=new_v)


def _named_grads(params: Mapping[str, Parameter], grads: GradientMap) -> dict[str, np.ndarray]:
    return {name: grads[p] for name, p in params.items() if p in grads}


class SGD:
    def __init__(self, params: Mapping[str, Parameter], lr: float = DEFAULT_LEARNING_RATE):
        self.params = dict(params)
        self.lr = lr

    def step(self, grads: GradientMap) -> None:
        values = {name: p.data for name, p in self.params.items()}
        for name, value in sgd_step(values, _named_grads(self.params, grads), self.lr).items():
            self.params[name].data = value


class Adam:
    """Adam over a fixed set of named parameters, updated in place."""

    def __init__(self, params: Mapping[str, Parameter], hyper: AdamHyper | None = None):
        self.params = dict(params)
        self.hyper = hyper or AdamHyper()
        self.state = AdamState()

    def step(self, grads: GradientMap) -> None:
        values = {name: p.data for name, p in self.params.items()}
        updated, self.state = adam_step(
            values, _named_grads(self.params, grads), self.state, self.hyper
        )
        for name, value in updated.items():
            self.params[name].data = value
