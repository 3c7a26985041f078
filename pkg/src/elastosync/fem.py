"""Element matrices for linear isotropic elastodynamics, time-step control and
artificial mass scaling.

All element computations use the exact constant-strain P1 formulation: the
strain-displacement matrix B is constant over a tetrahedron, so single-point
integration of B^T D B is exact.  Dofs are node-major with (x, y, z)
interleaved.  Masses are lumped by row summation, rho*V/4 per node and dof.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElementError
from .mesh import Mesh

logger = logging.getLogger(__name__)

_DEGENERATE_VOLUME = 1e-14


def lame_coefficients(E: float, nu: float) -> tuple[float, float]:
    """First and second Lame coefficients from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic material with mass-proportional damping.

    Units are CGS: dynes/cm^2 for moduli, g/cm^3 for density, 1/s for the
    damping factor alpha (damping matrix C = alpha * M).
    """

    E: float
    nu: float
    rho: float
    alpha: float = 0.0

    def __post_init__(self):
        lame_coefficients(self.E, self.nu)  # validates E, nu
        if self.rho <= 0:
            raise ValueError(f"density must be positive, got {self.rho}")
        if self.alpha < 0:
            raise ValueError(f"damping factor must be >= 0, got {self.alpha}")

    @property
    def mu(self) -> float:
        return lame_coefficients(self.E, self.nu)[0]

    @property
    def lam(self) -> float:
        return lame_coefficients(self.E, self.nu)[1]

    def wave_speed(self) -> float:
        """Nominal dilatational speed sqrt(E / (rho (1 - nu^2))) [cm/s]."""
        return float(np.sqrt(self.E / (self.rho * (1.0 - self.nu ** 2))))


def elasticity_matrix(mu: float, lam: float) -> np.ndarray:
    """6x6 Voigt form of the isotropic elasticity tensor (engineering shear)."""
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[0, 0] = D[1, 1] = D[2, 2] = lam + 2.0 * mu
    D[3, 3] = D[4, 4] = D[5, 5] = mu
    return D


def _shape_gradients(tet_coords: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradients of the four P1 shape functions and the signed volume."""
    e = tet_coords[1:] - tet_coords[0]
    det = np.linalg.det(e)
    volume = det / 6.0
    if abs(volume) <= _DEGENERATE_VOLUME:
        raise DegenerateElementError(-1, volume)
    inv = np.linalg.inv(e)
    grads = np.empty((4, 3))
    grads[1:] = inv.T
    grads[0] = -inv.T.sum(axis=0)
    return grads, volume


def _strain_matrix(grads: np.ndarray) -> np.ndarray:
    """6x12 B matrix mapping nodal displacements to Voigt strains."""
    B = np.zeros((6, 12))
    for a in range(4):
        gx, gy, gz = grads[a]
        B[0, 3 * a] = gx
        B[1, 3 * a + 1] = gy
        B[2, 3 * a + 2] = gz
        B[3, 3 * a] = gy
        B[3, 3 * a + 1] = gx
        B[4, 3 * a + 1] = gz
        B[4, 3 * a + 2] = gy
        B[5, 3 * a] = gz
        B[5, 3 * a + 2] = gx
    return B


def element_stiffness(tet_coords: np.ndarray, mat: Material) -> np.ndarray:
    """12x12 stiffness of one tetrahedron [dynes/cm]."""
    grads, volume = _shape_gradients(np.asarray(tet_coords, dtype=float))
    B = _strain_matrix(grads)
    D = elasticity_matrix(mat.mu, mat.lam)
    return abs(volume) * (B.T @ D @ B)


def element_lumped_mass(tet_coords: np.ndarray, mat: Material,
                        rho: float | None = None) -> np.ndarray:
    """Row-sum lumped mass, rho*V/4 per dof, as a 12-vector [g]."""
    _, volume = _shape_gradients(np.asarray(tet_coords, dtype=float))
    density = mat.rho if rho is None else rho
    return np.full(12, density * abs(volume) / 4.0)


def element_stiffness_batch(mesh: Mesh, mat: Material) -> np.ndarray:
    """Stiffness matrices for all elements, shape (n_elems, 12, 12)."""
    pts = mesh.nodes[mesh.tets]                      # (E, 4, 3)
    e = pts[:, 1:] - pts[:, :1]                      # (E, 3, 3)
    det = np.linalg.det(e)
    vols = det / 6.0
    bad = np.nonzero(np.abs(vols) <= _DEGENERATE_VOLUME)[0]
    if len(bad):
        raise DegenerateElementError(bad[0], vols[bad[0]])
    inv = np.linalg.inv(e)                           # (E, 3, 3)
    grads = np.empty((mesh.n_elems, 4, 3))
    grads[:, 1:] = np.transpose(inv, (0, 2, 1))
    grads[:, 0] = -grads[:, 1:].sum(axis=1)

    B = np.zeros((mesh.n_elems, 6, 12))
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

    D = elasticity_matrix(mat.mu, mat.lam)
    DB = np.einsum("ij,ejk->eik", D, B)
    Ke = np.einsum("eji,ejk->eik", B, DB)
    Ke *= np.abs(vols)[:, None, None]
    return Ke


def tet_volumes(mesh: Mesh) -> np.ndarray:
    """Unsigned element volumes, validating against degeneracy."""
    pts = mesh.nodes[mesh.tets]
    vols = np.linalg.det(pts[:, 1:] - pts[:, :1]) / 6.0
    bad = np.nonzero(np.abs(vols) <= _DEGENERATE_VOLUME)[0]
    if len(bad):
        raise DegenerateElementError(bad[0], vols[bad[0]])
    return np.abs(vols)


def element_sizes(mesh: Mesh) -> np.ndarray:
    """Characteristic element lengths h_e: inscribed-sphere diameters.

    h_e = 6 V_e / (total face area).  The inscribed-sphere diameter is used as
    the stable-step length scale; larger sphere measures overestimate the
    admissible explicit step on well-shaped tetrahedra.
    """
    pts = mesh.nodes[mesh.tets]
    vols = tet_volumes(mesh)
    faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    area = np.zeros(mesh.n_elems)
    for f in faces:
        q = pts[:, f, :]
        area += 0.5 * np.linalg.norm(
            np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]), axis=1)
    return 6.0 * vols / area


def element_time_steps(mesh: Mesh, mat: Material, alpha_s: float) -> np.ndarray:
    """Per-element stable step alpha_s * h_e / wave_speed [s]."""
    if not 0.0 < alpha_s < 1.0:
        raise ValueError(f"safety factor must lie in (0, 1), got {alpha_s}")
    return alpha_s * element_sizes(mesh) / mat.wave_speed()


def cfl_time_step(mesh: Mesh, mat: Material, alpha_s: float = 0.9) -> float:
    """Stable explicit step: alpha_s * min_e h_e / sqrt(E/(rho(1-nu^2)))."""
    return float(element_time_steps(mesh, mat, alpha_s).min())


@dataclass(frozen=True)
class MassScaling:
    """Result of artificial mass scaling."""

    rho_hat: np.ndarray      # per-element density [g/cm^3]
    mass_increase_pct: float  # R_m, percent increase of total mass
    dt_hat: float            # target time step [s]


def mass_scale(mesh: Mesh, mat: Material, beta: float,
               alpha_s: float = 0.9) -> MassScaling:
    """Raise densities of the smallest elements so dt_hat = beta*dt is stable.

    Elements whose own stable step falls below the target receive
    rho_hat = E dt_hat^2 / (alpha_s^2 h_e^2 (1 - nu^2)); the rest keep rho.
    Scaling to a fixed target is idempotent.
    """
    if beta < 1.0:
        raise ValueError(f"mass-scaling factor beta must be >= 1, got {beta}")
    dt_elems = element_time_steps(mesh, mat, alpha_s)
    dt_hat = beta * dt_elems.min()
    h = element_sizes(mesh)
    rho_needed = mat.E * dt_hat ** 2 / (alpha_s ** 2 * h ** 2 * (1.0 - mat.nu ** 2))
    rho_hat = np.where(dt_elems < dt_hat, rho_needed, mat.rho)
    vols = tet_volumes(mesh)
    m0 = mat.rho * vols.sum()
    r_m = 100.0 * (float(rho_hat @ vols) - m0) / m0
    return MassScaling(rho_hat=rho_hat, mass_increase_pct=r_m, dt_hat=float(dt_hat))


def lumped_mass_vector(mesh: Mesh, mat: Material,
                       rho_hat: np.ndarray | None = None) -> np.ndarray:
    """Global lumped mass diagonal, rho*V/4 accumulated per node dof."""
    vols = tet_volumes(mesh)
    rho = np.full(mesh.n_elems, mat.rho) if rho_hat is None else rho_hat
    node_mass = np.zeros(mesh.n_nodes)
    np.add.at(node_mass, mesh.tets.ravel(),
              np.repeat(rho * vols / 4.0, 4))
    return np.repeat(node_mass, 3)


def body_force_vector(mesh: Mesh, body_force: np.ndarray) -> np.ndarray:
    """Consistent P1 load for a constant body force [dynes/cm^3]: V/4 per node."""
    vols = tet_volumes(mesh)
    node_weight = np.zeros(mesh.n_nodes)
    np.add.at(node_weight, mesh.tets.ravel(), np.repeat(vols / 4.0, 4))
    return np.outer(node_weight, np.asarray(body_force, dtype=float)).ravel()


def _element_dofs(tets: np.ndarray) -> np.ndarray:
    """(E, 12) global dof indices for each element."""
    return (3 * tets[:, :, None] + np.arange(3)).reshape(len(tets), 12)


def assemble_stiffness(mesh: Mesh, mat: Material) -> sp.csr_matrix:
    """Global sparse stiffness matrix."""
    Ke = element_stiffness_batch(mesh, mat)
    dofs = _element_dofs(mesh.tets)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)),
                      shape=(mesh.n_dofs, mesh.n_dofs))
    return K.tocsr()


def assemble_consistent_mass(mesh: Mesh, mat: Material,
                             rho_hat: np.ndarray | None = None) -> sp.csr_matrix:
    """Global consistent mass matrix (P1: rho V (1 + delta_ab) / 20)."""
    vols = tet_volumes(mesh)
    rho = np.full(mesh.n_elems, mat.rho) if rho_hat is None else rho_hat
    base = np.ones((4, 4)) + np.eye(4)           # node-pair pattern * rho V / 20
    Me = np.einsum("e,ab->eab", rho * vols / 20.0, base)
    Me_full = np.zeros((mesh.n_elems, 12, 12))
    for d in range(3):
        Me_full[:, d::3, d::3] = Me
    dofs = _element_dofs(mesh.tets)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    M = sp.coo_matrix((Me_full.ravel(), (rows, cols)),
                      shape=(mesh.n_dofs, mesh.n_dofs))
    return M.tocsr()
