"""Bias-corrected Adam on a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import OptimizerError, ParameterError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS

    @classmethod
    def zeros(cls, size, lr, **kwargs):
        return cls(np.zeros(size), np.zeros(size), 0, lr, **kwargs)


def adam_step(state: AdamState, params, grad):
    """One Adam update. Returns ``(new_state, new_params)``; inputs are not modified."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ParameterError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise OptimizerError(int(bad[0]))
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), new_params
