"""Adam with bias correction, keyed by parameter name."""

from __future__ import annotations

import numpy as np

from .params import ParamSet


class AdamState:
    """Per-parameter first/second moments plus a shared step counter."""

    def __init__(self, params: ParamSet, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}


def adam_step(params: ParamSet, grads: dict, state: AdamState):
    """Apply one Adam update in place; grads must cover every parameter."""
    missing = [name for name in params.names() if name not in grads]
    if missing:
        raise KeyError(f"missing gradients for parameters: {missing}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
