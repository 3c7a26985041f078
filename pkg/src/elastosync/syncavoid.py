"""Synchronization-avoiding distributed solve.

Steps up to n_cri run the fully synchronized solver; afterwards the ranks
advance in blocks of n_s*n_f steps with no inter-rank exchange at all: each
rank refills the shared-dof values of the whole block from its own surrogate
model, updates every local dof with the lumped explicit step, overwrites the
shared dofs with the modeled values and re-imposes Dirichlet conditions.
Where two ranks carry the same shared node each keeps its own model's value
locally; the per-rank shared-dof series are returned so the paired
predictions can be compared for error monitoring.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import comm, fem, integrator
from .comm import T_D, T_E, T_M, T_S, T_TOTAL, StarExchanger
from .errors import InstabilityError
from .evaluate import refill_predict
from .integrator import LoadSpec
from .mesh import Mesh
from .nn import EncDecParams
from .partition import Partition
from .sampling import SampleConfig


@dataclass(frozen=True)
class SyncAvoidConfig:
    """Switch step and the sampling scheme the models were trained with."""

    n_cri: int
    sample: SampleConfig

    def __post_init__(self):
        least = self.sample.n_p * self.sample.n_s + 1
        if self.n_cri < least:
            raise ValueError(
                f"n_cri must be >= n_p*n_s + 1 = {least}, got {self.n_cri}")


@dataclass
class SyncAvoidResult:
    """Gathered history plus the per-rank views needed for error monitoring."""

    trajectory: np.ndarray               # (n_T, n_dof) gathered, lowest rank wins
    timings: list[np.ndarray]            # per rank, (n_T-1, 5)
    rank_shared_series: list[np.ndarray]  # per rank, (n_T, 3*n_shared_r)
    shared_dofs: list[np.ndarray]        # per rank, matching global dof ids
    n_cri: int


def _check_models(models: list[EncDecParams], partition: Partition) -> None:
    if len(models) != partition.n_ranks:
        raise ValueError(
            f"need one model per rank ({partition.n_ranks}), got {len(models)}")
    for r, model in enumerate(models):
        dofs = partition.shared_dofs(r)
        if model.n_dof != len(dofs):
            raise ValueError(
                f"rank {r} model covers {model.n_dof} dofs, partition has "
                f"{len(dofs)} shared dofs")
        if model.shared_dofs is not None and \
                not np.array_equal(model.shared_dofs, dofs):
            raise ValueError(f"rank {r} model was trained on different shared dofs")


def sync_avoiding_solve(mesh: Mesh, partition: Partition, mat: fem.Material,
                        load: LoadSpec, dt: float, n_T: int,
                        models: list[EncDecParams], cfg: SyncAvoidConfig,
                        mode: str = "pre_assembled", latency_s: float = 0.0,
                        rho_hat: np.ndarray | None = None,
                        d0: np.ndarray | None = None,
                        v0: np.ndarray | None = None,
                        timeout: float = 60.0) -> SyncAvoidResult:
    """Run the switched solver; see module docstring for the block scheme."""
    if n_T < 1:
        raise ValueError(f"n_T must be >= 1, got {n_T}")
    _check_models(models, partition)
    sample = cfg.sample
    block = sample.n_s * sample.n_f
    n_hist = sample.n_p * sample.n_s

    contexts = comm.build_rank_contexts(mesh, partition, mat, load, mode, rho_hat)
    d0 = np.zeros(mesh.n_dofs) if d0 is None else np.array(d0, dtype=float)
    v0 = np.zeros(mesh.n_dofs) if v0 is None else np.array(v0, dtype=float)
    d0[mesh.dirichlet_dofs()] = 0.0
    a0 = integrator._solve_initial_acceleration(mesh, mat, load, d0, v0, rho_hat)

    exchanger = StarExchanger([c.shared_global for c in contexts],
                              latency_s=latency_s, timeout=timeout)
    traj_locals = [np.empty((n_T, c.n_local_dofs)) for c in contexts]
    timings = [np.zeros((n_T - 1, 5)) for _ in contexts]
    alpha_f = load.alpha_f if models[0].conditional else None

    def make_worker(ctx: comm.RankContext, model: EncDecParams,
                    local: np.ndarray, timing: np.ndarray):
        def run():
            d_prev, d_prev2 = comm.initial_local_state(ctx, d0, v0, a0, dt)
            local[0] = d_prev
            n = 1
            with np.errstate(over="ignore", invalid="ignore"):
                while n < n_T:
                    if n <= cfg.n_cri:
                        d = comm.synchronized_step(ctx, exchanger, d_prev,
                                                   d_prev2, load, dt, n,
                                                   timing[n - 1])
                        local[n] = d
                        d_prev2, d_prev = d_prev, d
                        n += 1
                        continue
                    # Prediction block: refill the shared dofs, then step
                    # every local dof without any exchange.
                    t0 = time.perf_counter()
                    history = local[n - n_hist:n, ctx.shared].T
                    preds = refill_predict(model, history, n, sample,
                                           history_start=n - n_hist,
                                           alpha_f=alpha_f)
                    t_model = time.perf_counter() - t0
                    m_end = min(n + block, n_T)
                    td_step = t_model / (m_end - n)
                    for m in range(n, m_end):
                        t1 = time.perf_counter()
                        f_int, f_ext = comm.element_phase(ctx, d_prev, load,
                                                          m * dt)
                        t2 = time.perf_counter()
                        d = integrator.central_difference_step(
                            d_prev, d_prev2, ctx.m_lumped, ctx.c_lumped,
                            f_int, f_ext, dt)
                        d[ctx.shared] = preds[:, m - n]
                        d[ctx.dirichlet] = 0.0
                        if not np.all(np.isfinite(d)):
                            raise InstabilityError(m, ctx.rank)
                        local[m] = d
                        d_prev2, d_prev = d_prev, d
                        t3 = time.perf_counter()
                        row = timing[m - 1]
                        row[T_E] = t2 - t1
                        row[T_S] = 0.0
                        row[T_M] = t3 - t2
                        row[T_D] = td_step
                        row[T_TOTAL] = (t3 - t1) + td_step
                    n = m_end
        return run

    comm._run_workers(
        [make_worker(c, m, tl, tm)
         for c, m, tl, tm in zip(contexts, models, traj_locals, timings)],
        exchanger)

    trajectory = comm.gather_global(traj_locals, contexts, mesh.n_dofs)
    rank_shared = [tl[:, c.shared] for tl, c in zip(traj_locals, contexts)]
    return SyncAvoidResult(
        trajectory=trajectory, timings=timings, rank_shared_series=rank_shared,
        shared_dofs=[c.shared_global for c in contexts], n_cri=cfg.n_cri)
