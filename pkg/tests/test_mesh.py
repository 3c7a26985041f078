"""Mesh generation, the text format, and partitioning."""
import numpy as np
import pytest

import elastosync as es
from elastosync.mesh import signed_volumes


class TestGenerateBeamMesh:
    def test_unit_cube_counts_and_volume(self):
        mesh = es.generate_beam_mesh(1, 1, 1, 1, 1, 1)
        assert mesh.n_nodes == 8
        assert mesh.n_elems == 6
        assert signed_volumes(mesh.nodes, mesh.tets).sum() == pytest.approx(
            1.0, rel=1e-12)

    def test_beam_counts(self):
        mesh = es.generate_beam_mesh(25, 1, 1, 25, 1, 1)
        assert mesh.n_nodes == 104          # 26 * 2 * 2
        assert mesh.n_elems == 150
        assert len(mesh.dirichlet_nodes) == 4

    @pytest.mark.parametrize("dims", [(25, 1, 1, 25, 2, 2), (3, 2, 5, 4, 3, 2),
                                      (1, 1, 1, 1, 1, 1)])
    def test_volume_partition_of_box(self, dims):
        L, W, H, nx, ny, nz = dims
        mesh = es.generate_beam_mesh(L, W, H, nx, ny, nz)
        vols = signed_volumes(mesh.nodes, mesh.tets)
        assert np.all(vols > 0), "every tet must be positively oriented"
        assert vols.sum() == pytest.approx(L * W * H, rel=1e-12)

    def test_node_counts_formula(self):
        mesh = es.generate_beam_mesh(4, 2, 3, 4, 3, 5)
        assert mesh.n_nodes == 5 * 4 * 6
        assert mesh.n_elems == 6 * 4 * 3 * 5

    def test_dirichlet_nodes_on_clamped_face(self, beam_mesh):
        assert np.all(beam_mesh.nodes[beam_mesh.dirichlet_nodes, 0] == 0.0)
        assert beam_mesh.dirichlet_nodes.max() < beam_mesh.n_nodes

    def test_deterministic(self):
        a = es.generate_beam_mesh(5, 2, 1, 5, 2, 1)
        b = es.generate_beam_mesh(5, 2, 1, 5, 2, 1)
        assert np.array_equal(a.nodes, b.nodes)
        assert np.array_equal(a.tets, b.tets)

    @pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
    def test_rejects_bad_cell_counts(self, bad):
        with pytest.raises(ValueError):
            es.generate_beam_mesh(1, 1, 1, *bad)

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError):
            es.generate_beam_mesh(0.0, 1, 1, 1, 1, 1)
        with pytest.raises(ValueError):
            es.generate_beam_mesh(1, -2.0, 1, 1, 1, 1)


class TestMeshFile:
    def test_round_trip(self, tmp_path, beam_mesh):
        path = tmp_path / "beam.mesh"
        es.write_mesh(beam_mesh, path)
        back = es.read_mesh(path)
        assert np.array_equal(back.nodes, beam_mesh.nodes)
        assert np.array_equal(back.tets, beam_mesh.tets)
        assert np.array_equal(back.dirichlet_nodes, beam_mesh.dirichlet_nodes)

    def test_header_layout(self, tmp_path):
        mesh = es.generate_beam_mesh(1, 1, 1, 1, 1, 1)
        path = tmp_path / "cube.mesh"
        es.write_mesh(mesh, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "nodes 8"
        assert lines[9] == "tets 6"
        assert lines[16] == "dirichlet 4"

    def test_rejects_malformed(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("nodes 1\n0 0 0\ntets 1\n0 0 0 9\ndirichlet 0\n")
        with pytest.raises(ValueError, match="out of range"):
            es.read_mesh(path)


class TestPartition:
    def test_single_rank_no_shared(self, beam_mesh):
        part = es.partition_mesh(beam_mesh, 1)
        assert part.n_ranks == 1
        assert len(part.shared_nodes[0]) == 0
        assert np.array_equal(np.sort(part.local_nodes[0]),
                              np.arange(beam_mesh.n_nodes))

    def test_two_ranks_share_one_cross_section(self, beam_mesh):
        # Derived by enumerating nodes incident to elements of both halves:
        # a clean x-plane cut leaves exactly the 2x2 section nodes shared.
        part = es.partition_mesh(beam_mesh, 2)
        for r in range(2):
            assert len(part.shared_nodes[r]) == 4
        shared_x = beam_mesh.nodes[part.shared_nodes[0], 0]
        assert np.all(shared_x == shared_x[0])

    @pytest.mark.parametrize("n_c", [1, 2, 3, 4, 8])
    def test_ownership_is_a_partition(self, beam_mesh, n_c):
        part = es.partition_mesh(beam_mesh, n_c)
        counts = np.bincount(part.elem_owner, minlength=n_c)
        assert counts.sum() == beam_mesh.n_elems
        assert np.all(counts > 0)

    @pytest.mark.parametrize("n_c", [2, 3, 5])
    def test_shared_nodes_match_bruteforce(self, n_c):
        mesh = es.generate_beam_mesh(6, 2, 1, 6, 2, 1)
        part = es.partition_mesh(mesh, n_c)
        # oracle: a node is shared iff its incident elements span >= 2 owners
        owners_of = {}
        for e, tet in enumerate(mesh.tets):
            for node in tet:
                owners_of.setdefault(int(node), set()).add(
                    int(part.elem_owner[e]))
        for r in range(n_c):
            expect = sorted(n for n, o in owners_of.items()
                            if len(o) >= 2 and r in o)
            assert list(part.shared_nodes[r]) == expect
        for node, owners in part.node_owners.items():
            assert len(owners) >= 2
            assert set(owners) == owners_of[node]

    def test_local_nodes_cover_all_touched(self, beam_mesh):
        part = es.partition_mesh(beam_mesh, 4)
        union = np.unique(np.concatenate(part.local_nodes))
        assert np.array_equal(union, np.unique(beam_mesh.tets))

    def test_rejects_bad_rank_count(self, beam_mesh):
        with pytest.raises(ValueError):
            es.partition_mesh(beam_mesh, 0)
        with pytest.raises(ValueError):
            es.partition_mesh(beam_mesh, beam_mesh.n_elems + 1)

    def test_shared_dofs_sorted(self, beam_mesh):
        part = es.partition_mesh(beam_mesh, 4)
        for r in range(4):
            dofs = part.shared_dofs(r)
            assert np.all(np.diff(dofs) > 0)
