"""Element matrices against independent quadrature oracles, CFL and mass scaling."""
import numpy as np
import pytest

import elastosync as es
from elastosync import fem
from elastosync.errors import DegenerateElementError

REFERENCE_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

# 4-point Gauss rule on the reference tetrahedron (degree 2, weights sum 1/6).
_GAUSS_A = 0.5854101966249685
_GAUSS_B = 0.1381966011250105
_GAUSS_POINTS = [
    (_GAUSS_A, _GAUSS_B, _GAUSS_B), (_GAUSS_B, _GAUSS_A, _GAUSS_B),
    (_GAUSS_B, _GAUSS_B, _GAUSS_A), (_GAUSS_B, _GAUSS_B, _GAUSS_B),
]


def quadrature_stiffness(coords, mat):
    """Independent oracle: sum w * B(x)^T D B(x) |J| over Gauss points, with
    shape gradients taken from the inverted monomial matrix at each point."""
    A = np.hstack([np.ones((4, 1)), coords])
    coeffs = np.linalg.solve(A, np.eye(4))     # column i: coeffs of N_i
    detJ = np.linalg.det(coords[1:] - coords[0])
    D = fem.elasticity_matrix(*es.lame_coefficients(mat.E, mat.nu))
    Ke = np.zeros((12, 12))
    for point, weight in zip(_GAUSS_POINTS, [0.25 / 6] * 4):
        B = np.zeros((6, 12))
        for a in range(4):
            gx, gy, gz = coeffs[1, a], coeffs[2, a], coeffs[3, a]
            B[0, 3 * a] = gx
            B[1, 3 * a + 1] = gy
            B[2, 3 * a + 2] = gz
            B[3, 3 * a], B[3, 3 * a + 1] = gy, gx
            B[4, 3 * a + 1], B[4, 3 * a + 2] = gz, gy
            B[5, 3 * a], B[5, 3 * a + 2] = gz, gx
        Ke += weight * abs(detJ) * (B.T @ D @ B)
    return Ke


def quadrature_consistent_mass(coords, rho):
    """Oracle for the 12x12 consistent mass by exact P1 integration."""
    A = np.hstack([np.ones((4, 1)), coords])
    coeffs = np.linalg.solve(A, np.eye(4))
    detJ = abs(np.linalg.det(coords[1:] - coords[0]))
    M = np.zeros((12, 12))
    for point, weight in zip(_GAUSS_POINTS, [0.25 / 6] * 4):
        N = coeffs[0] + coeffs[1:].T @ np.asarray(point)
        for a in range(4):
            for b in range(4):
                for d in range(3):
                    M[3 * a + d, 3 * b + d] += weight * detJ * rho * N[a] * N[b]
    return M


def rigid_motion_vectors(coords):
    """Three translations and three infinitesimal rotations."""
    vecs = []
    for d in range(3):
        v = np.zeros(12)
        v[d::3] = 1.0
        vecs.append(v)
    for axis in range(3):
        v = np.zeros(12)
        for a in range(4):
            v[3 * a:3 * a + 3] = np.cross(np.eye(3)[axis], coords[a])
        vecs.append(v)
    return vecs


class TestLameCoefficients:
    def test_zero_poisson(self):
        mu, lam = es.lame_coefficients(1e6, 0.0)
        assert mu == pytest.approx(5e5)
        assert lam == 0.0

    def test_reference_value(self):
        mu, lam = es.lame_coefficients(1e6, 0.3)
        assert mu == pytest.approx(384615.3846153846, rel=1e-12)
        assert lam == pytest.approx(576923.0769230769, rel=1e-12)

    def test_ratio_identity_nu_04(self):
        # coronary-tissue modulus; lambda/mu = 2 nu / (1 - 2 nu) = 4
        mu, lam = es.lame_coefficients(6.26e6, 0.4)
        assert np.isfinite(mu) and np.isfinite(lam)
        assert lam / mu == pytest.approx(4.0, rel=1e-12)

    def test_rejects_incompressible(self):
        with pytest.raises(ValueError):
            es.lame_coefficients(1e6, 0.5)
        with pytest.raises(ValueError):
            es.lame_coefficients(-1.0, 0.3)


class TestElementStiffness:
    def test_reference_tet_matches_quadrature(self):
        mat = es.Material(E=1.0, nu=0.0, rho=1.0)
        Ke = fem.element_stiffness(REFERENCE_TET, mat)
        oracle = quadrature_stiffness(REFERENCE_TET, mat)
        scale = np.linalg.norm(Ke)
        assert np.abs(Ke - oracle).max() <= 1e-10 * scale

    @pytest.mark.parametrize("seed", range(4))
    def test_random_tets_match_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        coords = REFERENCE_TET + 0.3 * rng.normal(size=(4, 3))
        mat = es.Material(E=1e6, nu=0.3, rho=1.0)
        Ke = fem.element_stiffness(coords, mat)
        oracle = quadrature_stiffness(coords, mat)
        assert np.abs(Ke - oracle).max() <= 1e-10 * np.linalg.norm(Ke)

    def test_symmetry_and_nullspace(self):
        rng = np.random.default_rng(11)
        coords = REFERENCE_TET + 0.25 * rng.normal(size=(4, 3))
        mat = es.Material(E=2e6, nu=0.25, rho=1.0)
        Ke = fem.element_stiffness(coords, mat)
        fro = np.linalg.norm(Ke)
        assert np.abs(Ke - Ke.T).max() <= 1e-12 * fro
        for v in rigid_motion_vectors(coords):
            assert np.abs(Ke @ v).max() <= 1e-9 * fro
        # exactly 6 near-zero eigenvalues
        eig = np.linalg.eigvalsh(Ke)
        assert np.sum(np.abs(eig) <= 1e-9 * fro) == 6

    def test_rigid_translation(self):
        mat = es.Material(E=1e6, nu=0.3, rho=1.0)
        Ke = fem.element_stiffness(REFERENCE_TET, mat)
        v = np.zeros(12)
        v[0::3] = 1.0
        assert np.abs(Ke @ v).max() <= 1e-9 * np.linalg.norm(Ke)

    def test_degenerate_raises(self):
        flat = REFERENCE_TET.copy()
        flat[3] = flat[0]
        mat = es.Material(E=1e6, nu=0.3, rho=1.0)
        with pytest.raises(DegenerateElementError):
            fem.element_stiffness(flat, mat)

    def test_batch_matches_single(self, small_mesh, material):
        Ke = fem.element_stiffness_batch(small_mesh, material)
        for e in range(small_mesh.n_elems):
            single = fem.element_stiffness(
                small_mesh.nodes[small_mesh.tets[e]], material)
            assert np.abs(Ke[e] - single).max() <= 1e-12 * np.linalg.norm(single)


class TestLumpedMass:
    def test_reference_tet_entries(self):
        mat = es.Material(E=1.0, nu=0.0, rho=1.0)
        me = fem.element_lumped_mass(REFERENCE_TET, mat)
        assert me == pytest.approx(np.full(12, 1.0 / 24.0), rel=1e-14)

    def test_total_is_three_rho_v(self):
        rng = np.random.default_rng(3)
        coords = REFERENCE_TET + 0.3 * rng.normal(size=(4, 3))
        mat = es.Material(E=1e6, nu=0.3, rho=2.5)
        vol = abs(np.linalg.det(coords[1:] - coords[0])) / 6.0
        me = fem.element_lumped_mass(coords, mat)
        assert me.sum() == pytest.approx(3.0 * 2.5 * vol, rel=1e-12)

    def test_equals_consistent_row_sums(self):
        rng = np.random.default_rng(5)
        coords = REFERENCE_TET + 0.2 * rng.normal(size=(4, 3))
        mat = es.Material(E=1e6, nu=0.3, rho=1.7)
        me = fem.element_lumped_mass(coords, mat)
        oracle = quadrature_consistent_mass(coords, 1.7).sum(axis=1)
        assert np.abs(me - oracle).max() <= 1e-12

    def test_global_lumped_total(self, beam_mesh, material):
        m = fem.lumped_mass_vector(beam_mesh, material)
        assert m.sum() == pytest.approx(3.0 * material.rho * 25.0, rel=1e-12)

    def test_damping_is_alpha_times_mass(self, beam_mesh):
        mat = es.Material(E=1e6, nu=0.3, rho=1.0, alpha=0.7)
        m = fem.lumped_mass_vector(beam_mesh, mat)
        assert np.array_equal(mat.alpha * m, 0.7 * m)


class TestGlobalStiffness:
    def test_symmetric_psd_with_rigid_nullspace(self, small_mesh, material):
        K = fem.assemble_stiffness(small_mesh, material).toarray()
        fro = np.linalg.norm(K)
        assert np.abs(K - K.T).max() <= 1e-12 * fro
        for d in range(3):
            v = np.zeros(small_mesh.n_dofs)
            v[d::3] = 1.0
            assert np.abs(K @ v).max() <= 1e-9 * fro
        eig = np.linalg.eigvalsh(K)
        assert eig.min() >= -1e-9 * fro


class TestCflTimeStep:
    def test_direct_evaluation(self):
        # uniform cells: h_e identical for every element, dt = 0.9 h / c
        mesh = es.generate_beam_mesh(4, 1, 1, 4, 1, 1)
        mat = es.Material(E=1e6, nu=0.3, rho=1.0)
        h = fem.element_sizes(mesh)
        assert np.allclose(h, h[0], rtol=1e-12)
        expected = 0.9 * h[0] / np.sqrt(1e6 / 0.91)
        assert es.cfl_time_step(mesh, mat, 0.9) == pytest.approx(expected, rel=1e-12)

    def test_linear_in_safety_factor(self, beam_mesh, material):
        full = es.cfl_time_step(beam_mesh, material, 0.9)
        half = es.cfl_time_step(beam_mesh, material, 0.45)
        assert half == pytest.approx(full / 2.0, rel=1e-12)

    def test_rejects_bad_safety_factor(self, beam_mesh, material):
        for bad in (0.0, 1.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                es.cfl_time_step(beam_mesh, material, bad)


class TestMassScale:
    def test_beta_one_is_identity(self, beam_mesh, material):
        scaling = es.mass_scale(beam_mesh, material, 1.0)
        assert np.array_equal(scaling.rho_hat,
                              np.full(beam_mesh.n_elems, material.rho))
        assert scaling.mass_increase_pct == 0.0

    def test_uniform_mesh_beta_two(self, material):
        mesh = es.generate_beam_mesh(4, 1, 1, 4, 1, 1)
        scaling = es.mass_scale(mesh, material, 2.0)
        assert scaling.rho_hat == pytest.approx(
            np.full(mesh.n_elems, 4.0 * material.rho), rel=1e-12)
        assert scaling.mass_increase_pct == pytest.approx(300.0, rel=1e-12)

    def test_postcondition_every_element_stable(self, material):
        # graded mesh: stretched cells give a genuine spread of h_e
        mesh = es.generate_beam_mesh(10, 1, 2, 10, 2, 2)
        for beta in (1.5, 3.0):
            scaling = es.mass_scale(mesh, material, beta)
            h = fem.element_sizes(mesh)
            dt_elems = 0.9 * h / np.sqrt(
                material.E / (scaling.rho_hat * (1 - material.nu ** 2)))
            assert np.all(dt_elems >= scaling.dt_hat * (1 - 1e-12))

    def test_idempotent_for_fixed_target(self, material):
        mesh = es.generate_beam_mesh(10, 1, 2, 10, 2, 2)
        first = es.mass_scale(mesh, material, 2.0)
        second = es.mass_scale(mesh, material, 2.0)
        assert np.array_equal(first.rho_hat, second.rho_hat)
        assert first.dt_hat == second.dt_hat

    def test_rejects_beta_below_one(self, beam_mesh, material):
        with pytest.raises(ValueError):
            es.mass_scale(beam_mesh, material, 0.99)


class TestMaterialValidation:
    def test_rejects_bad_density_and_damping(self):
        with pytest.raises(ValueError):
            es.Material(E=1e6, nu=0.3, rho=0.0)
        with pytest.raises(ValueError):
            es.Material(E=1e6, nu=0.3, rho=1.0, alpha=-0.1)
