"""Structured tetrahedral cantilever meshes and the plain-text mesh format.

A box [0,L]x[0,W]x[0,H] is divided into nx*ny*nz hexahedral cells, each split
into six tetrahedra around the cell's main diagonal (Kuhn split).  The split is
orientation-uniform: every tetrahedron is stored with positive signed volume.
Nodes with x = 0 form the clamped (Dirichlet) face.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Corner visit orders for the six tetrahedra of a cell.  Each entry is a
# permutation of the axes; walking the cell's main diagonal one axis at a time
# yields the tet (c000, c000+e_a, c000+e_a+e_b, c111).
_KUHN_PERMUTATIONS = (
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
)


@dataclass(frozen=True)
class Mesh:
    """Tetrahedral mesh with a clamped node set.

    Attributes
    ----------
    nodes : (n_nodes, 3) float64 array of coordinates [cm].
    tets : (n_elems, 4) int64 array of node indices, positively oriented.
    dirichlet_nodes : sorted int64 array of clamped node indices.
    """

    nodes: np.ndarray
    tets: np.ndarray
    dirichlet_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elems(self) -> int:
        return self.tets.shape[0]

    @property
    def n_dofs(self) -> int:
        return 3 * self.nodes.shape[0]

    def dirichlet_dofs(self) -> np.ndarray:
        """Constrained dof indices (node-major, xyz interleaved)."""
        return (3 * self.dirichlet_nodes[:, None] + np.arange(3)).ravel()

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs()] = False
        return np.nonzero(mask)[0]


def signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of each tetrahedron (positive for consistent orientation)."""
    p = nodes[tets]
    e = p[:, 1:] - p[:, :1]
    return np.linalg.det(e) / 6.0


def generate_beam_mesh(L: float, W: float, H: float,
                       nx: int, ny: int, nz: int) -> Mesh:
    """Generate the structured cantilever beam mesh.

    Produces (nx+1)(ny+1)(nz+1) nodes and 6*nx*ny*nz tetrahedra; all nodes on
    the x = 0 face are clamped.  Generation is deterministic: identical inputs
    yield bit-identical node orderings.
    """
    if min(nx, ny, nz) < 1:
        raise ValueError(f"cell counts must be >= 1, got ({nx}, {ny}, {nz})")
    if min(L, W, H) <= 0:
        raise ValueError(f"box dimensions must be positive, got ({L}, {W}, {H})")

    xs = np.linspace(0.0, L, nx + 1)
    ys = np.linspace(0.0, W, ny + 1)
    zs = np.linspace(0.0, H, nz + 1)
    # node id = ix + (nx+1)*(iy + (ny+1)*iz), x fastest
    nodes = np.empty(((nx + 1) * (ny + 1) * (nz + 1), 3))
    for iz in range(nz + 1):
        for iy in range(ny + 1):
            base = (nx + 1) * (iy + (ny + 1) * iz)
            nodes[base:base + nx + 1, 0] = xs
            nodes[base:base + nx + 1, 1] = ys[iy]
            nodes[base:base + nx + 1, 2] = zs[iz]

    def nid(ix, iy, iz):
        return ix + (nx + 1) * (iy + (ny + 1) * iz)

    tets = np.empty((6 * nx * ny * nz, 4), dtype=np.int64)
    e = 0
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                corner = np.array([ix, iy, iz])
                for perm in _KUHN_PERMUTATIONS:
                    walk = [corner]
                    cur = corner
                    for axis in perm:
                        cur = cur.copy()
                        cur[axis] += 1
                        walk.append(cur)
                    tets[e] = [nid(*w) for w in walk]
                    e += 1

    # Enforce positive orientation by swapping the last two vertices of any
    # left-handed walk.
    flip = np.nonzero(signed_volumes(nodes, tets) < 0)[0]
    tets[flip[:, None], [2, 3]] = tets[flip[:, None], [3, 2]]

    dirichlet = np.nonzero(nodes[:, 0] == 0.0)[0].astype(np.int64)
    return Mesh(nodes=nodes, tets=tets, dirichlet_nodes=dirichlet)


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format.

    Layout: "nodes N" then N "x y z" lines, "tets M" then M index lines,
    "dirichlet K" then K indices.
    """
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y, z in mesh.nodes:
            fh.write(f"{x!r} {y!r} {z!r}\n")
        fh.write(f"tets {mesh.n_elems}\n")
        for a, b, c, d in mesh.tets:
            fh.write(f"{a} {b} {c} {d}\n")
        fh.write(f"dirichlet {len(mesh.dirichlet_nodes)}\n")
        for n in mesh.dirichlet_nodes:
            fh.write(f"{n}\n")


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format written by :func:`write_mesh`."""
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            got = tokens[pos] if pos < len(tokens) else "<eof>"
            raise ValueError(f"malformed mesh file: expected '{word}', got '{got}'")
        pos += 1
        count = int(tokens[pos])
        pos += 1
        return count

    n_nodes = expect("nodes")
    nodes = np.array(tokens[pos:pos + 3 * n_nodes], dtype=float).reshape(n_nodes, 3)
    pos += 3 * n_nodes
    n_tets = expect("tets")
    tets = np.array(tokens[pos:pos + 4 * n_tets], dtype=np.int64).reshape(n_tets, 4)
    pos += 4 * n_tets
    n_dir = expect("dirichlet")
    dirichlet = np.array(tokens[pos:pos + n_dir], dtype=np.int64)
    pos += n_dir
    if pos != len(tokens):
        raise ValueError("malformed mesh file: trailing tokens")
    if tets.size and (tets.min() < 0 or tets.max() >= n_nodes):
        raise ValueError("malformed mesh file: tet index out of range")
    if dirichlet.size and (dirichlet.min() < 0 or dirichlet.max() >= n_nodes):
        raise ValueError("malformed mesh file: dirichlet index out of range")
    return Mesh(nodes=nodes, tets=tets, dirichlet_nodes=dirichlet)
