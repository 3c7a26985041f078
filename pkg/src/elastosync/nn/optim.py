"""Adam with bias correction and the exponential learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encdec import EncDecParams


def epoch_count(eta0: float, gamma: float, eta_min: float) -> int:
    """Number of epochs until the exponential schedule reaches the floor LR:
    floor(log_gamma(eta_min / eta0))."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"decay rate must lie in (0, 1), got {gamma}")
    if not 0.0 < eta_min < eta0:
        raise ValueError(
            f"need 0 < eta_min < eta0, got eta_min={eta_min}, eta0={eta0}")
    return int(math.floor(math.log(eta_min / eta0) / math.log(gamma)))


def learning_rate(eta0: float, gamma: float, epoch: int,
                  eta_min: float = 0.0) -> float:
    """eta0 * gamma^epoch, floored at eta_min."""
    return max(eta0 * gamma ** epoch, eta_min)


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter tensors."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: EncDecParams) -> "AdamState":
        return cls(m={n: np.zeros_like(a) for n, a in params.tensors()},
                   v={n: np.zeros_like(a) for n, a in params.tensors()})


def adam_step(params: EncDecParams, grads: dict[str, np.ndarray],
              state: AdamState, eta: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[EncDecParams, AdamState]:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, arr in params.tensors():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        arr -= eta * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state
