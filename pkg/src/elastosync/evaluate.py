"""Recursive model evaluation and the sample-refill prediction scheme.

``e_mse`` measures accuracy over N chained model applications where every
application after the first consumes previous predictions, matching how the
model is used online.  ``refill_predict`` runs the model n_s times with inputs
shifted by one raw step each, so the union of the strided output index sets
covers every one of the next n_s*n_f raw steps exactly once:

    inputs  (shift i, 1-based): steps i+n - n_p*n_s - 1, stride n_s, n_p entries
    outputs (shift i, 1-based): steps i+n - 1,           stride n_s, n_f entries
"""
from __future__ import annotations

import numpy as np

from .nn import EncDecParams, mse_loss
from .sampling import SampleConfig


def refill_index_sets(n: int, cfg: SampleConfig
                      ) -> list[tuple[np.ndarray, np.ndarray]]:
    """(input steps, output steps) per shift i = 1..n_s for a block at step n."""
    sets = []
    for i in range(1, cfg.n_s + 1):
        first_in = i + n - cfg.n_p * cfg.n_s - 1
        inputs = first_in + cfg.n_s * np.arange(cfg.n_p)
        first_out = i + n - 1
        outputs = first_out + cfg.n_s * np.arange(cfg.n_f)
        sets.append((inputs, outputs))
    return sets


def refill_predict(model: EncDecParams, history: np.ndarray, n: int,
                   cfg: SampleConfig, history_start: int = 0,
                   alpha_f: float | None = None) -> np.ndarray:
    """Predict the shared-dof values of raw steps n .. n + n_s*n_f - 1.

    ``history`` holds previously computed shared-dof solutions as an
    (n_dof, >= n_p*n_s) array whose column j is step ``history_start + j``;
    it must cover steps n - n_p*n_s .. n - 1.
    """
    need_lo = n - cfg.n_p * cfg.n_s
    if need_lo < history_start or n - 1 >= history_start + history.shape[1]:
        raise ValueError(
            f"history covers steps [{history_start}, "
            f"{history_start + history.shape[1]}), refill at n={n} needs "
            f"[{need_lo}, {n})")
    out = np.empty((history.shape[0], cfg.n_s * cfg.n_f))
    for inputs, outputs in refill_index_sets(n, cfg):
        X = history[:, inputs - history_start]
        Y = model.predict_sequence(X, n_f=cfg.n_f, alpha_f=alpha_f,
                                   out_steps=outputs)
        out[:, outputs - n] = Y
    return out


def e_mse(model: EncDecParams, trajectory: np.ndarray, shared_dofs: np.ndarray,
          start: int, N: int, cfg: SampleConfig,
          alpha_f: float | None = None) -> float:
    """MSE over N recursive applications on the subsampled shared-dof series.

    ``start`` indexes the subsampled series (stride n_s over the trajectory);
    the first input window is the n_p samples before ``start``, later windows
    are previous predictions.  Collapses to the plain window MSE at N = 1.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if start < cfg.n_p:
        raise ValueError(
            f"start must leave n_p={cfg.n_p} samples of history, got {start}")
    series = trajectory[::cfg.n_s, :][:, np.asarray(shared_dofs, np.int64)].T
    horizon = start + N * cfg.n_f
    if horizon > series.shape[1]:
        raise ValueError(
            f"horizon {horizon} samples exceeds subsampled length "
            f"{series.shape[1]} (n_T={trajectory.shape[0]}, n_s={cfg.n_s})")
    window = series[:, start - cfg.n_p:start]
    total = 0.0
    for rep in range(N):
        lo_sample = start + rep * cfg.n_f
        pred = model.predict_sequence(
            window, n_f=cfg.n_f, alpha_f=alpha_f,
            out_steps=cfg.n_s * (lo_sample + np.arange(cfg.n_f)))
        truth = series[:, lo_sample:lo_sample + cfg.n_f]
        total += mse_loss(truth, pred) * cfg.n_f * series.shape[0]
        stitched = np.concatenate([window, pred], axis=1)
        window = stitched[:, -cfg.n_p:]
    return total / (N * cfg.n_f * series.shape[0])
