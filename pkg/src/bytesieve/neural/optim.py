from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_LR = 5e-5


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0

    @classmethod
    def fresh(cls, params) -> "AdamState":
        return cls(tuple(np.zeros_like(p) for p in params), tuple(np.zeros_like(p) for p in params), 0)


def adam_step(params, grads, state: AdamState, lr: float = DEFAULT_LR, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update.  Inputs are left untouched; returns
    ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    t = state.t + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p.append((p - step).astype(p.dtype, copy=False))
        new_m.append(m.astype(p.dtype, copy=False))
        new_v.append(v.astype(p.dtype, copy=False))
    return new_p, AdamState(tuple(new_m), tuple(new_v), t)
