"""Mini-batch training of the per-rank surrogate models."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError
from .nn import (AdamState, EncDecParams, adam_step, epoch_count, init_encdec,
                 learning_rate, loss_and_grads)
from .sampling import Dataset, normalization_stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings; epochs follow the LR-floor formula."""

    n_B: int = 5
    eta0: float = 5e-4
    gamma: float = 0.9995
    eta_min: float = 5e-7
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.n_B < 1:
            raise ValueError(f"mini-batch size must be >= 1, got {self.n_B}")
        epoch_count(self.eta0, self.gamma, self.eta_min)  # validates the rest

    @property
    def n_epoch(self) -> int:
        return epoch_count(self.eta0, self.gamma, self.eta_min)


def train_model(dataset: Dataset, params: EncDecParams, cfg: TrainConfig,
                log_every: int = 0) -> list[float]:
    """Train one model in place; returns the per-epoch mean loss history.

    Mini-batch order and membership are reshuffled every epoch from a
    generator seeded by ``cfg.seed``, so runs are reproducible bit for bit.
    """
    if dataset.n_windows < 1:
        raise ValueError("empty dataset")
    if dataset.n_dof != params.n_dof:
        raise ValueError(
            f"dataset has {dataset.n_dof} dofs, model expects {params.n_dof}")
    if params.conditional and dataset.alphas is None:
        raise ValueError("conditional model needs per-window load magnitudes")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params)
    history: list[float] = []
    for epoch in range(cfg.n_epoch):
        eta = learning_rate(cfg.eta0, cfg.gamma, epoch, cfg.eta_min)
        order = rng.permutation(dataset.n_windows)
        total = 0.0
        for start in range(0, len(order), cfg.n_B):
            idx = order[start:start + cfg.n_B]
            alphas = None if dataset.alphas is None else dataset.alphas[idx]
            loss, grads = loss_and_grads(params, dataset.X[idx],
                                         dataset.Y[idx], alphas)
            adam_step(params, grads, state, eta, cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * len(idx)
        mean_loss = total / dataset.n_windows
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        history.append(mean_loss)
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d/%d: loss=%.3e eta=%.2e",
                        epoch + 1, cfg.n_epoch, mean_loss, eta)
    return history


def train_rank_models(datasets: list[Dataset], cfg: TrainConfig, n_hidden: int,
                      k: int = 2, conditional: bool = False, n_rep: int = 12,
                      n_p: int = 20, n_f: int = 20, n_s: int = 1,
                      shared_dofs: list[np.ndarray] | None = None,
                      log_every: int = 0
                      ) -> tuple[list[EncDecParams], list[list[float]]]:
    """Train one independent model replica per rank (seeds = seed + rank)."""
    models, histories = [], []
    for rank, ds in enumerate(datasets):
        shift, scale = normalization_stats(ds)
        params = init_encdec(
            n_dof=ds.n_dof, n_hidden=n_hidden, k=k, conditional=conditional,
            n_rep=n_rep, seed=cfg.seed + rank, norm_shift=shift,
            norm_scale=scale, n_p=ds.X.shape[2], n_f=ds.Y.shape[2], n_s=n_s,
            shared_dofs=None if shared_dofs is None else shared_dofs[rank])
        rank_cfg = TrainConfig(n_B=cfg.n_B, eta0=cfg.eta0, gamma=cfg.gamma,
                               eta_min=cfg.eta_min, beta1=cfg.beta1,
                               beta2=cfg.beta2, eps=cfg.eps,
                               seed=cfg.seed + rank)
        histories.append(train_model(ds, params, rank_cfg, log_every))
        models.append(params)
    return models, histories
