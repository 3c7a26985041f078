"""Error-monitoring metrics for predicted trajectories.

Three families of measures are produced, all over the shared nodes:

* instantaneous: the global displacement error e_l2(t) and the per-shared-dof
  averages es_l2(t) (prediction vs truth) and es_hat_l2(t) (discrepancy
  between the paired predictions of the ranks owning each node);
* time-averaged per node: et, et_bar, et_hat.

The paired discrepancy needs no reference solution, so it serves as the
online error monitor.  Nodes shared by more than two ranks contribute the
mean over all unordered rank pairs.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .partition import Partition


@dataclass
class ErrorMetrics:
    shared_nodes: np.ndarray          # (N_a,) global node ids, sorted
    e_l2: np.ndarray                  # (n_T,) global l2 error
    es_l2: np.ndarray                 # (n_T,) per-shared-dof error, gathered values
    es_bar_l2: np.ndarray | None      # (n_T,) rank-averaged error
    es_hat_l2: np.ndarray | None      # (n_T,) paired-prediction discrepancy
    et: np.ndarray                    # (N_a,) time-averaged per node
    et_bar: np.ndarray | None
    et_hat: np.ndarray | None

    def correlation_bar_hat(self) -> float:
        """Empirical correlation of the es_bar and es_hat series (reported,
        never asserted)."""
        if self.es_bar_l2 is None or self.es_hat_l2 is None:
            return float("nan")
        a, b = self.es_bar_l2, self.es_hat_l2
        if np.std(a) == 0.0 or np.std(b) == 0.0:
            return float("nan")
        return float(np.corrcoef(a, b)[0, 1])


def _node_norms(traj_a: np.ndarray, traj_b: np.ndarray,
                dofs: np.ndarray) -> np.ndarray:
    """(n_T, N) per-node l2 norms of the difference at node dof triples."""
    diff = traj_a[:, dofs] - traj_b[:, dofs]
    return np.linalg.norm(diff.reshape(diff.shape[0], -1, 3), axis=2)


def error_metrics(true_traj: np.ndarray, pred_traj: np.ndarray,
                  partition: Partition,
                  rank_shared_series: list[np.ndarray] | None = None,
                  rank_shared_dofs: list[np.ndarray] | None = None
                  ) -> ErrorMetrics:
    """Compute all metrics; rank series enable the bar/hat variants."""
    if true_traj.shape != pred_traj.shape:
        raise ValueError(
            f"misaligned trajectories: {true_traj.shape} vs {pred_traj.shape}")
    n_T = true_traj.shape[0]
    nodes = partition.all_shared_nodes()
    n_a = len(nodes)
    dofs = (3 * nodes[:, None] + np.arange(3)).ravel()

    e_l2 = np.linalg.norm(true_traj - pred_traj, axis=1)
    if n_a == 0:
        zero = np.zeros(n_T)
        return ErrorMetrics(nodes, e_l2, zero, None, None,
                            np.zeros(0), None, None)

    norms = _node_norms(pred_traj, true_traj, dofs)        # (n_T, N_a)
    es_l2 = norms.sum(axis=1) / (3.0 * n_a)
    et = norms.sum(axis=0) / (3.0 * n_T)

    if rank_shared_series is None:
        return ErrorMetrics(nodes, e_l2, es_l2, None, None, et, None, None)

    if rank_shared_dofs is None:
        rank_shared_dofs = [partition.shared_dofs(r)
                            for r in range(partition.n_ranks)]
    # Per-rank view of each shared node: (n_T, 3) displacement series.
    views: dict[int, dict[int, np.ndarray]] = {}
    for r, (series, rdofs) in enumerate(zip(rank_shared_series,
                                            rank_shared_dofs)):
        node_of = rdofs.reshape(-1, 3)[:, 0] // 3
        for pos, node in enumerate(node_of):
            views.setdefault(int(node), {})[r] = series[:, 3 * pos:3 * pos + 3]

    err_bar = np.zeros((n_T, n_a))
    disc_hat = np.zeros((n_T, n_a))
    for j, node in enumerate(nodes):
        owners = partition.node_owners[int(node)]
        truth = true_traj[:, 3 * node:3 * node + 3]
        per_rank = [np.linalg.norm(views[int(node)][r] - truth, axis=1)
                    for r in owners]
        err_bar[:, j] = np.mean(per_rank, axis=0)
        pairs = [np.linalg.norm(views[int(node)][a] - views[int(node)][b], axis=1)
                 for a, b in combinations(owners, 2)]
        disc_hat[:, j] = np.mean(pairs, axis=0)

    es_bar = err_bar.sum(axis=1) / (3.0 * n_a)
    es_hat = disc_hat.sum(axis=1) / (3.0 * n_a)
    et_bar = err_bar.sum(axis=0) / (3.0 * n_T)
    et_hat = disc_hat.sum(axis=0) / (3.0 * n_T)
    return ErrorMetrics(nodes, e_l2, es_l2, es_bar, es_hat, et, et_bar, et_hat)


def write_metrics_csv(path, metrics: ErrorMetrics) -> None:
    """CSV with columns step, e_l2, es_l2, es_hat."""
    es_hat = metrics.es_hat_l2
    with open(path, "w") as fh:
        fh.write("step,e_l2,es_l2,es_hat\n")
        for t in range(len(metrics.e_l2)):
            hat = es_hat[t] if es_hat is not None else float("nan")
            fh.write(f"{t},{metrics.e_l2[t]!r},{metrics.es_l2[t]!r},{hat!r}\n")
