"""Adam with bias correction over named parameter dictionaries."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionError


@dataclass
class AdamState:
    """Per-parameter moments plus the shared step counter."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        state = cls(learning_rate=learning_rate, beta1=beta1, beta2=beta2,
                    epsilon=epsilon)
        for name, p in params.items():
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        return state


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected update, in place; returns (params, state).

    Parameters without a gradient entry are left untouched (their moments
    do not decay either, matching sparse-update conventions).
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.shape}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        _kernels.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=p.dtype).reshape(-1),
            m.reshape(-1), v.reshape(-1),
            bc1, bc2, state.learning_rate, state.beta1, state.beta2,
            state.epsilon)
    return params, state
