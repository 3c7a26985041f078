"""Rank-parallel execution of the synchronized explicit solver.

One long-lived worker thread per rank steps its own element subset; the three
per-step synchronization tasks are realized as a star exchange through rank 0:
every rank posts the force entries of its shared dofs, rank 0 sums the
contributions per dof in ascending rank order (fixed reduction order, bitwise
reproducible) and posts the totals back.  A configurable artificial latency is
slept once per wire leg (post and reply) to emulate slower interconnects.

Per-step wall times are recorded in four phases: element evaluation (t_e),
synchronization including barrier wait (t_s), the displacement update (t_m)
and data-driven model evaluation (t_d, zero here; filled by the
synchronization-avoiding solver).
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import fem, integrator
from .errors import CommunicationError, InstabilityError
from .integrator import LoadSpec
from .mesh import Mesh
from .partition import Partition

# Timing-series column layout (seconds per step).
T_E, T_S, T_M, T_D, T_TOTAL = range(5)


@dataclass(frozen=True)
class StepTiming:
    """Phase costs of one step on one rank [s]."""

    step: int
    rank: int
    t_e: float
    t_s: float
    t_m: float
    t_d: float
    t_total: float


def timing_rows(series: np.ndarray, rank: int) -> list[StepTiming]:
    """View a rank's (n_steps, 5) timing array as StepTiming records."""
    return [StepTiming(step, rank, *row) for step, row in enumerate(series, start=1)]


def write_timing_csv(path, series_per_rank: list[np.ndarray]) -> None:
    """CSV with columns step, rank, t_e, t_s, t_m, t_d."""
    with open(path, "w") as fh:
        fh.write("step,rank,t_e,t_s,t_m,t_d\n")
        for rank, series in enumerate(series_per_rank):
            for step, row in enumerate(series, start=1):
                fh.write(f"{step},{rank},{row[T_E]!r},{row[T_S]!r},"
                         f"{row[T_M]!r},{row[T_D]!r}\n")


def reduce_shared_forces(shared_dofs, f_int_vals, f_ext_vals):
    """Sum shared-dof contributions across ranks in ascending rank order.

    Parameters are per-rank lists: global dof ids and the matching force
    entries.  Returns per-rank lists holding, for every shared dof, the total
    over all ranks that carry it.
    """
    totals_int: dict[int, float] = {}
    totals_ext: dict[int, float] = {}
    for dofs, fi, fe in zip(shared_dofs, f_int_vals, f_ext_vals):
        for dof, vi, ve in zip(dofs, fi, fe):
            dof = int(dof)
            totals_int[dof] = totals_int.get(dof, 0.0) + float(vi)
            totals_ext[dof] = totals_ext.get(dof, 0.0) + float(ve)
    out_int = [np.array([totals_int[int(d)] for d in dofs]) for dofs in shared_dofs]
    out_ext = [np.array([totals_ext[int(d)] for d in dofs]) for dofs in shared_dofs]
    return out_int, out_ext


@dataclass
class RankContext:
    """Per-rank solver data in local dof numbering."""

    rank: int
    n_ranks: int
    global_dofs: np.ndarray        # (n_local_dofs,) global dof id per local dof
    conn: np.ndarray               # (E_r, 12) local dof indices per owned element
    tet_pts: np.ndarray            # (E_r, 4, 3) coordinates of owned elements
    elem_rho: np.ndarray           # (E_r,) element densities (after scaling)
    Ke: np.ndarray | None          # pre-assembled stiffness, None in nopre mode
    m_lumped: np.ndarray           # global lumped mass at local dofs
    c_lumped: np.ndarray
    f_base: np.ndarray             # owned-element unit-ramp load at local dofs
    dirichlet: np.ndarray          # local dof indices
    shared: np.ndarray             # local dof indices of shared dofs (ascending global)
    shared_global: np.ndarray      # matching global dof ids
    mat: fem.Material

    @property
    def n_local_dofs(self) -> int:
        return len(self.global_dofs)

    def stiffness(self) -> np.ndarray:
        """Owned-element stiffness; recomputed on demand in nopre mode."""
        if self.Ke is not None:
            return self.Ke
        return _stiffness_from_points(self.tet_pts, self.mat)

    def external_base(self) -> np.ndarray:
        return self.f_base


def _stiffness_from_points(pts: np.ndarray, mat: fem.Material) -> np.ndarray:
    e = pts[:, 1:] - pts[:, :1]
    vols = np.abs(np.linalg.det(e)) / 6.0
    inv = np.linalg.inv(e)
    grads = np.empty((len(pts), 4, 3))
    grads[:, 1:] = np.transpose(inv, (0, 2, 1))
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    B = np.zeros((len(pts), 6, 12))
    for a in range(4):
        gx, gy, gz = grads[:, a, 0], grads[:, a, 1], grads[:, a, 2]
        B[:, 0, 3 * a] = gx
        B[:, 1, 3 * a + 1] = gy
        B[:, 2, 3 * a + 2] = gz
        B[:, 3, 3 * a] = gy
        B[:, 3, 3 * a + 1] = gx
        B[:, 4, 3 * a + 1] = gz
        B[:, 4, 3 * a + 2] = gy
        B[:, 5, 3 * a] = gz
        B[:, 5, 3 * a + 2] = gx
    D = fem.elasticity_matrix(mat.mu, mat.lam)
    Ke = np.einsum("eji,jk,ekl->eil", B, D, B)
    Ke *= vols[:, None, None]
    return Ke


def build_rank_contexts(mesh: Mesh, partition: Partition, mat: fem.Material,
                        load: LoadSpec, mode: str = "pre_assembled",
                        rho_hat: np.ndarray | None = None) -> list[RankContext]:
    """Distribute mesh data: local maps, global lumped matrices, base loads."""
    if mode not in ("pre_assembled", "per_step_assembly"):
        raise ValueError(f"unknown mode {mode!r}")
    m_global = fem.lumped_mass_vector(mesh, mat, rho_hat)
    c_global = mat.alpha * m_global
    vols = fem.tet_volumes(mesh)
    rho_elems = np.full(mesh.n_elems, mat.rho) if rho_hat is None else rho_hat
    dirichlet_set = mesh.dirichlet_dofs()

    contexts = []
    for r in range(partition.n_ranks):
        owned = np.nonzero(partition.elem_owner == r)[0]
        nodes_r = partition.local_nodes[r]
        global_dofs = (3 * nodes_r[:, None] + np.arange(3)).ravel()
        node_pos = {int(n): i for i, n in enumerate(nodes_r)}
        conn_nodes = np.vectorize(node_pos.__getitem__)(mesh.tets[owned]) \
            if len(owned) else np.empty((0, 4), dtype=np.int64)
        conn = (3 * conn_nodes[:, :, None] + np.arange(3)).reshape(len(owned), 12)

        pts = mesh.nodes[mesh.tets[owned]]
        f_base = np.zeros(3 * len(nodes_r))
        w = np.repeat(vols[owned] / 4.0, 4)
        np.add.at(f_base, (3 * conn_nodes.ravel()), w * load.body_force[0])
        np.add.at(f_base, (3 * conn_nodes.ravel() + 1), w * load.body_force[1])
        np.add.at(f_base, (3 * conn_nodes.ravel() + 2), w * load.body_force[2])

        dir_local = np.nonzero(np.isin(global_dofs, dirichlet_set))[0]
        shared_global = partition.shared_dofs(r)
        shared_local = np.searchsorted(global_dofs, shared_global)

        ctx = RankContext(
            rank=r, n_ranks=partition.n_ranks,
            global_dofs=global_dofs, conn=conn, tet_pts=pts,
            elem_rho=rho_elems[owned],
            Ke=_stiffness_from_points(pts, mat) if mode == "pre_assembled" and len(owned)
            else (np.empty((0, 12, 12)) if mode == "pre_assembled" else None),
            m_lumped=m_global[global_dofs],
            c_lumped=c_global[global_dofs],
            f_base=f_base,
            dirichlet=dir_local,
            shared=shared_local,
            shared_global=shared_global,
            mat=mat,
        )
        contexts.append(ctx)
    return contexts


class StarExchanger:
    """Gather-reduce-scatter of shared-dof forces through rank 0."""

    _ABORT = "abort"

    def __init__(self, shared_global_per_rank: list[np.ndarray],
                 latency_s: float = 0.0, timeout: float = 60.0):
        self.n_ranks = len(shared_global_per_rank)
        self.latency_s = float(latency_s)
        self.timeout = float(timeout)
        self.gather: queue.SimpleQueue = queue.SimpleQueue()
        self.inbox = [queue.SimpleQueue() for _ in range(self.n_ranks)]
        # Root-side scatter positions: contributions are accumulated into a
        # buffer over the union of shared dofs, visiting ranks in ascending
        # order so the summation order is fixed.
        union = np.unique(np.concatenate([s for s in shared_global_per_rank])
                          ) if self.n_ranks else np.empty(0, dtype=np.int64)
        self._union_size = len(union)
        self._slot = [np.searchsorted(union, s) for s in shared_global_per_rank]

    def exchange(self, rank: int, f_int_sh: np.ndarray,
                 f_ext_sh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Post this rank's contributions; block until totals come back."""
        self.gather.put((rank, f_int_sh, f_ext_sh))
        if self.latency_s > 0.0:
            time.sleep(self.latency_s)
        if rank == 0:
            self._reduce_and_reply()
        try:
            msg = self.inbox[rank].get(timeout=self.timeout)
        except queue.Empty:
            raise CommunicationError(rank, "no reply from root within timeout")
        if msg[0] is StarExchanger._ABORT:
            raise msg[1]
        if self.latency_s > 0.0:
            time.sleep(self.latency_s)
        return msg

    def abort(self, exc: BaseException) -> None:
        """Unblock every rank with the originating exception."""
        self.gather.put((StarExchanger._ABORT, exc))
        for box in self.inbox:
            box.put((StarExchanger._ABORT, exc))

    def _reduce_and_reply(self) -> None:
        received: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        while len(received) < self.n_ranks:
            try:
                msg = self.gather.get(timeout=self.timeout)
            except queue.Empty:
                missing = min(set(range(self.n_ranks)) - set(received))
                exc = CommunicationError(missing, "rank message missing at root")
                self.abort(exc)
                return
            if msg[0] is StarExchanger._ABORT:
                for box in self.inbox:
                    box.put(msg)
                return
            rank, fi, fe = msg
            received[rank] = (fi, fe)
        buf_int = np.zeros(self._union_size)
        buf_ext = np.zeros(self._union_size)
        for r in range(self.n_ranks):
            fi, fe = received[r]
            buf_int[self._slot[r]] += fi
            buf_ext[self._slot[r]] += fe
        for r in range(self.n_ranks):
            self.inbox[r].put((buf_int[self._slot[r]], buf_ext[self._slot[r]]))


def element_phase(ctx: RankContext, d_prev: np.ndarray,
                  load: LoadSpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Element loop: internal forces K_e d and the ramped external load."""
    f_int = np.zeros(ctx.n_local_dofs)
    if len(ctx.conn):
        fe = np.einsum("eij,ej->ei", ctx.stiffness(), d_prev[ctx.conn])
        np.add.at(f_int, ctx.conn.ravel(), fe.ravel())
    f_ext = ctx.external_base() * load.factor(t)
    return f_int, f_ext


def update_phase(ctx: RankContext, d_prev: np.ndarray, d_prev2: np.ndarray,
                 f_int: np.ndarray, f_ext: np.ndarray, dt: float,
                 step: int) -> np.ndarray:
    """Displacement update, Dirichlet enforcement and stability check."""
    d = integrator.central_difference_step(
        d_prev, d_prev2, ctx.m_lumped, ctx.c_lumped, f_int, f_ext, dt)
    d[ctx.dirichlet] = 0.0
    if not np.all(np.isfinite(d)):
        raise InstabilityError(step, ctx.rank)
    return d


def synchronized_step(ctx: RankContext, exchanger: StarExchanger,
                      d_prev: np.ndarray, d_prev2: np.ndarray,
                      load: LoadSpec, dt: float, step: int,
                      timing_row: np.ndarray) -> np.ndarray:
    """One step of the synchronized solver, recording phase times."""
    t0 = time.perf_counter()
    f_int, f_ext = element_phase(ctx, d_prev, load, step * dt)
    t1 = time.perf_counter()
    tot_int, tot_ext = exchanger.exchange(
        ctx.rank, f_int[ctx.shared], f_ext[ctx.shared])
    f_int[ctx.shared] = tot_int
    f_ext[ctx.shared] = tot_ext
    t2 = time.perf_counter()
    d = update_phase(ctx, d_prev, d_prev2, f_int, f_ext, dt, step)
    t3 = time.perf_counter()
    timing_row[T_E] = t1 - t0
    timing_row[T_S] = t2 - t1
    timing_row[T_M] = t3 - t2
    timing_row[T_TOTAL] = t3 - t0
    return d


def initial_local_state(ctx: RankContext, d0: np.ndarray, v0: np.ndarray,
                        a0: np.ndarray, dt: float):
    """Local (d_prev, d_prev2) seeded from the global initial conditions."""
    d_prev = d0[ctx.global_dofs].copy()
    d_prev2 = integrator.seed_previous_displacement(
        d_prev, v0[ctx.global_dofs], a0[ctx.global_dofs], dt)
    return d_prev, d_prev2


def gather_global(traj_locals: list[np.ndarray],
                  contexts: list[RankContext], n_dofs: int) -> np.ndarray:
    """Merge per-rank histories; shared dofs come from the lowest owning rank."""
    n_T = traj_locals[0].shape[0]
    out = np.zeros((n_T, n_dofs))
    for ctx, local in sorted(zip(contexts, traj_locals),
                             key=lambda p: -p[0].rank):
        out[:, ctx.global_dofs] = local
    return out


def _run_workers(targets: list, exchanger: StarExchanger) -> None:
    """Run one thread per rank; re-raise the most informative failure."""
    failures: list[BaseException] = []
    lock = threading.Lock()

    def wrap(fn):
        def runner():
            try:
                fn()
            except BaseException as exc:  # noqa: BLE001 worker faults propagate
                with lock:
                    failures.append(exc)
                exchanger.abort(exc)
        return runner

    threads = [threading.Thread(target=wrap(fn), name=f"rank{r}")
               for r, fn in enumerate(targets)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if failures:
        primary = [f for f in failures if not isinstance(f, CommunicationError)]
        raise (primary or failures)[0]


def distributed_solve(mesh: Mesh, partition: Partition, mat: fem.Material,
                      load: LoadSpec, dt: float, n_T: int,
                      mode: str = "pre_assembled", latency_s: float = 0.0,
                      rho_hat: np.ndarray | None = None,
                      d0: np.ndarray | None = None,
                      v0: np.ndarray | None = None,
                      timeout: float = 60.0,
                      ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Synchronized rank-parallel solve.

    Returns the gathered (n_T, n_dof) history plus one (n_T-1, 5) timing array
    per rank.  With a deterministic reduction order the result is bitwise
    reproducible; with one rank it is bitwise identical to the serial solver.
    """
    if n_T < 1:
        raise ValueError(f"n_T must be >= 1, got {n_T}")
    contexts = build_rank_contexts(mesh, partition, mat, load, mode, rho_hat)
    d0 = np.zeros(mesh.n_dofs) if d0 is None else np.array(d0, dtype=float)
    v0 = np.zeros(mesh.n_dofs) if v0 is None else np.array(v0, dtype=float)
    d0[mesh.dirichlet_dofs()] = 0.0
    a0 = integrator._solve_initial_acceleration(mesh, mat, load, d0, v0, rho_hat)

    exchanger = StarExchanger([c.shared_global for c in contexts],
                              latency_s=latency_s, timeout=timeout)
    traj_locals = [np.empty((n_T, c.n_local_dofs)) for c in contexts]
    timings = [np.zeros((n_T - 1, 5)) for _ in contexts]

    def make_worker(ctx: RankContext, local: np.ndarray, timing: np.ndarray):
        def run():
            d_prev, d_prev2 = initial_local_state(ctx, d0, v0, a0, dt)
            local[0] = d_prev
            with np.errstate(over="ignore", invalid="ignore"):
                for n in range(1, n_T):
                    d = synchronized_step(ctx, exchanger, d_prev, d_prev2,
                                          load, dt, n, timing[n - 1])
                    local[n] = d
                    d_prev2, d_prev = d_prev, d
        return run

    _run_workers([make_worker(c, tl, tm)
                  for c, tl, tm in zip(contexts, traj_locals, timings)],
                 exchanger)
    return gather_global(traj_locals, contexts, mesh.n_dofs), timings
