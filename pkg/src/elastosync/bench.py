"""Max-average performance aggregation and the speedup factor.

Per-step phase costs are first averaged per rank (discarding a warm-up
prefix); the summary then reports the rank with the largest average total,
which accounts for load imbalance between partitions.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .comm import T_D, T_E, T_M, T_S, T_TOTAL

# Steps discarded before averaging; short series keep at least half.
WARMUP_STEPS = 100


@dataclass(frozen=True)
class PerfSummary:
    """Max-average per-step costs [s] and their shares of the total [%]."""

    t_t: float
    t_e: float
    t_s: float
    t_m: float
    t_d: float
    r_e: float
    r_s: float
    r_m: float
    r_d: float
    n_ranks: int
    n_shared: int
    max_rank: int
    steps_averaged: int

    def as_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _warmup(n_steps: int, warmup: int | None) -> int:
    if warmup is None:
        warmup = min(WARMUP_STEPS, n_steps // 2)
    return min(warmup, n_steps - 1)


def max_average(timings: list[np.ndarray], n_shared: int = 0,
                warmup: int | None = None) -> PerfSummary:
    """Summarize per-rank `(n_steps, 5)` timing arrays."""
    if not timings or any(t.shape[0] < 1 for t in timings):
        raise ValueError("every rank needs at least one timed step")
    skip = _warmup(min(t.shape[0] for t in timings), warmup)
    means = np.array([t[skip:].mean(axis=0) for t in timings])
    max_rank = int(np.argmax(means[:, T_TOTAL]))
    m = means[max_rank]
    total = m[T_TOTAL]
    return PerfSummary(
        t_t=float(total), t_e=float(m[T_E]), t_s=float(m[T_S]),
        t_m=float(m[T_M]), t_d=float(m[T_D]),
        r_e=float(100.0 * m[T_E] / total), r_s=float(100.0 * m[T_S] / total),
        r_m=float(100.0 * m[T_M] / total), r_d=float(100.0 * m[T_D] / total),
        n_ranks=len(timings), n_shared=int(n_shared), max_rank=max_rank,
        steps_averaged=int(timings[max_rank].shape[0] - skip),
    )


def speedup(baseline: PerfSummary, accelerated: PerfSummary) -> float:
    """zeta = t_t(baseline) / t_t(accelerated)."""
    if accelerated.t_t <= 0.0:
        raise ValueError("accelerated total time must be positive")
    return baseline.t_t / accelerated.t_t


def write_summary_csv(path, summaries: dict[str, PerfSummary],
                      zeta: float | None = None) -> None:
    """One labeled row per summary, plus an optional speedup row."""
    fields = ["t_t", "t_e", "t_s", "t_m", "t_d",
              "r_e", "r_s", "r_m", "r_d",
              "n_ranks", "n_shared", "max_rank", "steps_averaged"]
    with open(path, "w") as fh:
        fh.write("run," + ",".join(fields) + "\n")
        for label, s in summaries.items():
            row = [repr(getattr(s, f)) for f in fields]
            fh.write(label + "," + ",".join(row) + "\n")
        if zeta is not None:
            fh.write(f"speedup,{zeta!r}" + "," * (len(fields) - 1) + "\n")
