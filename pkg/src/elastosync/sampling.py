"""Training-sample construction from solver trajectories.

Displacement histories are restricted to the shared dofs, subsampled every
n_s steps within the first n_ts fraction of the run, and cut into sliding
windows of n_p inputs and n_f targets (unit stride over the subsampled
series).  Window sets from several trajectories (different initial conditions
or load magnitudes) concatenate into one dataset.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"ELDATA01"


@dataclass(frozen=True)
class SampleConfig:
    """Subsampling and windowing hyperparameters."""

    n_s: int          # sampling stride [steps]
    n_p: int          # input sequence length [samples]
    n_f: int          # output sequence length [samples]
    n_ts: float = 1.0  # training fraction of the trajectory, in (0, 1]

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError(f"sampling stride must be >= 1, got {self.n_s}")
        if self.n_p < 1 or self.n_f < 1:
            raise ValueError(
                f"sequence lengths must be >= 1, got ({self.n_p}, {self.n_f})")
        if not 0.0 < self.n_ts <= 1.0:
            raise ValueError(f"training fraction must be in (0, 1], got {self.n_ts}")

    def min_steps(self) -> int:
        """Shortest trajectory (within the training fraction) that yields one window."""
        return int(np.ceil(((self.n_p + self.n_f - 1) * self.n_s + 1) / self.n_ts))


@dataclass
class Dataset:
    """Window set for one rank's shared dofs.

    X: (n_windows, n_dof, n_p), Y: (n_windows, n_dof, n_f); ``alphas`` holds
    one load magnitude per window for conditional training, else None.
    """

    X: np.ndarray
    Y: np.ndarray
    alphas: np.ndarray | None = None

    @property
    def n_windows(self) -> int:
        return self.X.shape[0]

    @property
    def n_dof(self) -> int:
        return self.X.shape[1]

    def concat(self, other: "Dataset") -> "Dataset":
        if (self.alphas is None) != (other.alphas is None):
            raise ValueError("cannot mix tagged and untagged windows")
        return Dataset(
            X=np.concatenate([self.X, other.X]),
            Y=np.concatenate([self.Y, other.Y]),
            alphas=None if self.alphas is None
            else np.concatenate([self.alphas, other.alphas]),
        )


def sampled_step_indices(n_T: int, cfg: SampleConfig) -> np.ndarray:
    """Step indices kept after truncation to n_ts and stride-n_s subsampling."""
    keep = int(np.floor(cfg.n_ts * n_T))
    return np.arange(0, keep, cfg.n_s)


def build_dataset(trajectory: np.ndarray, shared_dofs: np.ndarray,
                  cfg: SampleConfig, alpha_f: float | None = None) -> Dataset:
    """Cut one trajectory into training windows at the shared dofs."""
    steps = sampled_step_indices(trajectory.shape[0], cfg)
    n_windows = len(steps) - cfg.n_p - cfg.n_f + 1
    if n_windows < 1:
        raise ValueError(
            f"trajectory too short: need >= {cfg.min_steps()} steps for one "
            f"window at n_ts={cfg.n_ts}, got {trajectory.shape[0]}")
    series = trajectory[np.ix_(steps, np.asarray(shared_dofs, np.int64))].T
    n_dof = series.shape[0]
    X = np.empty((n_windows, n_dof, cfg.n_p))
    Y = np.empty((n_windows, n_dof, cfg.n_f))
    for w in range(n_windows):
        X[w] = series[:, w:w + cfg.n_p]
        Y[w] = series[:, w + cfg.n_p:w + cfg.n_p + cfg.n_f]
    alphas = None if alpha_f is None else np.full(n_windows, float(alpha_f))
    return Dataset(X=X, Y=Y, alphas=alphas)


def normalization_stats(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-dof mean/std over all window values; zero spread maps to scale 1."""
    values = np.concatenate([ds.X, ds.Y], axis=2)
    shift = values.mean(axis=(0, 2))
    scale = values.std(axis=(0, 2))
    scale[scale == 0.0] = 1.0
    return shift, scale


def make_ic_family(steady: np.ndarray, count: int, seed: int
                   ) -> tuple[list[np.ndarray], np.ndarray]:
    """Initial displacements d0 = (1 + u) * steady, u ~ U(-0.25, 0.25)."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.25, 0.25, size=count)
    return [(1.0 + ui) * steady for ui in u], u


def write_dataset(ds: Dataset, path) -> None:
    """Binary window file: header (magic, n_windows, n_dof, n_p, n_f,
    conditional flag) then X, Y and optional alpha blocks, float64 LE."""
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<qqqqq", ds.n_windows, ds.n_dof,
                             ds.X.shape[2], ds.Y.shape[2],
                             0 if ds.alphas is None else 1))
        fh.write(np.ascontiguousarray(ds.X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.Y, dtype="<f8").tobytes())
        if ds.alphas is not None:
            fh.write(np.ascontiguousarray(ds.alphas, dtype="<f8").tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(8) != DATASET_MAGIC:
            raise ValueError("not a dataset file")
        n_w, n_dof, n_p, n_f, cond = struct.unpack("<qqqqq", fh.read(40))
        X = np.frombuffer(fh.read(8 * n_w * n_dof * n_p), dtype="<f8")
        Y = np.frombuffer(fh.read(8 * n_w * n_dof * n_f), dtype="<f8")
        alphas = np.frombuffer(fh.read(8 * n_w), dtype="<f8").copy() if cond else None
    return Dataset(X=X.reshape(n_w, n_dof, n_p).copy(),
                   Y=Y.reshape(n_w, n_dof, n_f).copy(), alphas=alphas)
