"""Central-difference explicit time stepping and the serial reference solver.

The displacement update follows the lumped two-step form

    d_n = (M + dt/2 C)^(-1) [ dt^2 (f_ext - f_int) + 2 M d_{n-1}
                              - (M - dt/2 C) d_{n-2} ]

with diagonal M, C = alpha*M, f_int = K d_{n-1} accumulated element-wise and
f_ext the ramped external load evaluated at t_n = n*dt.  Time histories are
stored as (n_T, n_dof) arrays whose row n holds d^(n); row 0 is the initial
state, so a solve with n_T rows performs n_T - 1 updates.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import ConvergenceError, InstabilityError
from .mesh import Mesh

TRAJECTORY_MAGIC = b"ELTRAJ01"


@dataclass(frozen=True)
class LoadSpec:
    """External body-force loading [dynes/cm^3].

    The force is scaled by a linear ramp up to ``t_end`` and switched off for
    t >= ``cutoff`` (use ``inf`` for a permanent load).  ``alpha_f`` optionally
    records the magnitude parameter of a parametric load family.
    """

    body_force: np.ndarray
    t_end: float
    cutoff: float = float("inf")
    alpha_f: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "body_force",
                           np.asarray(self.body_force, dtype=float).reshape(3))
        if self.t_end <= 0:
            raise ValueError(f"ramp end must be positive, got {self.t_end}")
        if self.cutoff <= 0:
            raise ValueError(f"load cutoff must be positive, got {self.cutoff}")

    def factor(self, t: float) -> float:
        """Combined ramp/cutoff scale at time t."""
        if t >= self.cutoff:
            return 0.0
        return ramp_factor(t, self.t_end)


@dataclass
class SimState:
    """Rolling state of a central-difference run."""

    d_prev: np.ndarray    # d^(n-1)
    d_prev2: np.ndarray   # d^(n-2)
    n: int                # index of the next step to produce
    t: float              # n * dt
    dt: float


def ramp_factor(t: float, t_end: float) -> float:
    """Linear load ramp: t/t_end clamped to 1 past t_end."""
    return t / t_end if t <= t_end else 1.0


def _jacobi_pcg(A, b: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Diagonally preconditioned conjugate gradient for SPD A."""
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b)
    diag = np.asarray(A.diagonal() if hasattr(A, "diagonal") else np.diag(A))
    inv_diag = 1.0 / diag
    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * b_norm:
            return x
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"PCG did not reach relative residual {tol:g} in {max_iter} iterations")


def initial_acceleration(M, C, K, d0: np.ndarray, v0: np.ndarray,
                         f0: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve M a0 = f0 - C v0 - K d0 with consistent matrices.

    Uses diagonally preconditioned CG with an iteration cap of 10 * n_dof.
    """
    rhs = f0 - C @ v0 - K @ d0
    return _jacobi_pcg(M, rhs, tol=tol, max_iter=10 * len(rhs))


def central_difference_step(d_prev: np.ndarray, d_prev2: np.ndarray,
                            m_lumped: np.ndarray, c_lumped: np.ndarray,
                            f_int: np.ndarray, f_ext: np.ndarray,
                            dt: float) -> np.ndarray:
    """One lumped central-difference displacement update."""
    m_plus = m_lumped + 0.5 * dt * c_lumped
    if np.any(m_plus <= 0.0):
        raise ValueError("lumped (M + dt/2 C) must be entrywise positive")
    m_minus = m_lumped - 0.5 * dt * c_lumped
    return (dt * dt * (f_ext - f_int) + 2.0 * m_lumped * d_prev
            - m_minus * d_prev2) / m_plus


@dataclass
class _Kernel:
    """Precomputed per-mesh arrays shared by the serial and rank solvers."""

    elem_dofs: np.ndarray      # (E, 12)
    Ke: np.ndarray             # (E, 12, 12), empty in per-step-assembly mode
    m_lumped: np.ndarray
    c_lumped: np.ndarray
    f_base: np.ndarray         # unit-ramp external load
    dirichlet_dofs: np.ndarray
    n_dofs: int


def build_kernel(mesh: Mesh, mat: fem.Material, load: LoadSpec,
                 rho_hat: np.ndarray | None = None) -> _Kernel:
    m_lumped = fem.lumped_mass_vector(mesh, mat, rho_hat)
    return _Kernel(
        elem_dofs=fem._element_dofs(mesh.tets),
        Ke=fem.element_stiffness_batch(mesh, mat),
        m_lumped=m_lumped,
        c_lumped=mat.alpha * m_lumped,
        f_base=fem.body_force_vector(mesh, load.body_force),
        dirichlet_dofs=mesh.dirichlet_dofs(),
        n_dofs=mesh.n_dofs,
    )


def internal_forces(kernel: _Kernel, d: np.ndarray) -> np.ndarray:
    """Element-wise K d accumulation (deterministic element order)."""
    f = np.zeros(kernel.n_dofs)
    fe = np.einsum("eij,ej->ei", kernel.Ke, d[kernel.elem_dofs])
    np.add.at(f, kernel.elem_dofs.ravel(), fe.ravel())
    return f


def _solve_initial_acceleration(mesh: Mesh, mat: fem.Material, load: LoadSpec,
                                d0: np.ndarray, v0: np.ndarray,
                                rho_hat: np.ndarray | None) -> np.ndarray:
    f0 = fem.body_force_vector(mesh, load.body_force) * load.factor(0.0)
    a0 = np.zeros(mesh.n_dofs)
    if not (np.any(d0) or np.any(v0) or np.any(f0)):
        return a0
    free = mesh.free_dofs()
    K = fem.assemble_stiffness(mesh, mat)
    M = fem.assemble_consistent_mass(mesh, mat, rho_hat)
    C = mat.alpha * M
    rhs = (f0 - C @ v0 - K @ d0)[free]
    Mff = M[free][:, free]
    a0[free] = _jacobi_pcg(Mff, rhs, tol=1e-10, max_iter=10 * len(free))
    return a0


def seed_previous_displacement(d0: np.ndarray, v0: np.ndarray, a0: np.ndarray,
                               dt: float) -> np.ndarray:
    """Second-order Taylor seed d^(-1) = d0 - dt v0 + dt^2/2 a0."""
    return d0 - dt * v0 + 0.5 * dt * dt * a0


def serial_solve(mesh: Mesh, mat: fem.Material, load: LoadSpec, dt: float,
                 n_T: int, d0: np.ndarray | None = None,
                 v0: np.ndarray | None = None,
                 rho_hat: np.ndarray | None = None) -> np.ndarray:
    """Run the reference single-process solver; returns (n_T, n_dof) history."""
    if n_T < 1:
        raise ValueError(f"n_T must be >= 1, got {n_T}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    kernel = build_kernel(mesh, mat, load, rho_hat)
    d0 = np.zeros(kernel.n_dofs) if d0 is None else np.array(d0, dtype=float)
    v0 = np.zeros(kernel.n_dofs) if v0 is None else np.array(v0, dtype=float)
    d0[kernel.dirichlet_dofs] = 0.0
    a0 = _solve_initial_acceleration(mesh, mat, load, d0, v0, rho_hat)

    traj = np.empty((n_T, kernel.n_dofs))
    traj[0] = d0
    d_prev2 = seed_previous_displacement(d0, v0, a0, dt)
    d_prev = d0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_T):
            f_int = internal_forces(kernel, d_prev)
            f_ext = kernel.f_base * load.factor(n * dt)
            d = central_difference_step(d_prev, d_prev2, kernel.m_lumped,
                                        kernel.c_lumped, f_int, f_ext, dt)
            d[kernel.dirichlet_dofs] = 0.0
            if not np.all(np.isfinite(d)):
                raise InstabilityError(n)
            traj[n] = d
            d_prev2, d_prev = d_prev, d
    return traj


def write_trajectory(path, traj: np.ndarray, dt: float) -> None:
    """Binary little-endian history: magic, n_T, n_dof, dt, then rows."""
    traj = np.ascontiguousarray(traj, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(TRAJECTORY_MAGIC)
        fh.write(struct.pack("<qqd", traj.shape[0], traj.shape[1], dt))
        fh.write(traj.tobytes())


def read_trajectory(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TRAJECTORY_MAGIC:
            raise ValueError(f"not a trajectory file (magic {magic!r})")
        n_T, n_dof, dt = struct.unpack("<qqd", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n_T * n_dof:
        raise ValueError("trajectory file truncated")
    return data.reshape(n_T, n_dof).copy(), dt
