from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from padkit.numcore.tensor import Tensor, UsageError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning rate and epsilon must be positive")

    def clone(self) -> "AdamState":
        return copy.deepcopy(self)


class Adam:
    """Adam with bias correction over a fixed, named list of parameters.

    Moments are keyed by parameter name so the state survives a parameter
    set being swapped for a bit-identical copy (checkpoint reload, restore).
    """

    def __init__(self, params: dict[str, Tensor] | Iterable[tuple[str, Tensor]], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.state = AdamState(learning_rate=lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.state)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One in-place Adam update; grads are reset to zero afterwards."""
    for name, p in params.items():
        if p.grad is None:
            raise UsageError(f"parameter {name!r} has no gradient")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = p.grad.astype(p.dtype, copy=False)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / p.dtype.type(c1)
        vhat = v / p.dtype.type(c2)
        p.data = p.data - p.dtype.type(state.learning_rate) * mhat / (np.sqrt(vhat) + p.dtype.type(state.epsilon))
        p.grad = np.zeros_like(p.data)
