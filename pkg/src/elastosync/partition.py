"""Element partitioning by recursive coordinate bisection and shared-node maps.

Elements are sorted by centroid along the longest axis of the current group's
bounding box and split recursively.  Whenever a "clean" split position exists
(all element extents on the left lie below all extents on the right), the cut
snaps to the clean position closest to proportional balance, so structured
meshes are cut on whole cross-sectional planes; otherwise the cut falls at the
exact proportional index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

# A clean cut is accepted only while the larger side stays below this factor
# of its proportional share; beyond that the exact median cut is used.
_CLEAN_IMBALANCE_LIMIT = 1.25


@dataclass(frozen=True)
class Partition:
    """Element ownership and shared-node structure for ``n_ranks`` ranks.

    ``shared_nodes[r]`` lists (sorted, ascending) the global ids of nodes that
    belong to elements owned by two or more ranks, one of which is ``r``.
    ``node_owners`` maps each shared node to the sorted tuple of owning ranks.
    """

    n_ranks: int
    elem_owner: np.ndarray             # (n_elems,) int64
    local_nodes: list[np.ndarray]      # per rank, sorted global node ids
    shared_nodes: list[np.ndarray]     # per rank, sorted global node ids
    node_owners: dict[int, tuple[int, ...]]

    def shared_dofs(self, rank: int) -> np.ndarray:
        """Global dof ids of the rank's shared nodes, ascending."""
        nodes = self.shared_nodes[rank]
        return (3 * nodes[:, None] + np.arange(3)).ravel()

    def all_shared_nodes(self) -> np.ndarray:
        """Union of shared nodes over all ranks, sorted."""
        return np.array(sorted(self.node_owners), dtype=np.int64)


def _split_group(elems: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                 centroid: np.ndarray, n_left_ranks: int,
                 n_right_ranks: int) -> tuple[np.ndarray, np.ndarray]:
    """Split one element group along the longest axis of its bounding box."""
    coords_lo = lo[elems]
    coords_hi = hi[elems]
    spans = coords_hi.max(axis=0) - coords_lo.min(axis=0)
    axis = int(np.argmax(spans))

    order = np.lexsort((elems, centroid[elems, axis]))
    sorted_elems = elems[order]
    n = len(elems)
    ideal = int(round(n * n_left_ranks / (n_left_ranks + n_right_ranks)))
    ideal = min(max(ideal, 1), n - 1)

    # Positions p where max extent of the left block <= min extent of the
    # right block: a geometric plane separates the two element sets.
    pre_max = np.maximum.accumulate(coords_hi[order, axis])
    suf_min = np.minimum.accumulate(coords_lo[order, axis][::-1])[::-1]
    eps = 1e-12 * max(spans[axis], 1.0)
    candidates = np.nonzero(pre_max[:-1] <= suf_min[1:] + eps)[0] + 1

    split = ideal
    if len(candidates):
        best = candidates[np.argmin(np.abs(candidates - ideal))]
        worst_share = max(best / n_left_ranks, (n - best) / n_right_ranks)
        if worst_share <= _CLEAN_IMBALANCE_LIMIT * n / (n_left_ranks + n_right_ranks):
            split = int(best)
    return sorted_elems[:split], sorted_elems[split:]


def partition_mesh(mesh: Mesh, n_c: int) -> Partition:
    """Partition elements over ``n_c`` ranks and derive shared-node lists."""
    if not 1 <= n_c <= mesh.n_elems:
        raise ValueError(
            f"rank count must be in [1, {mesh.n_elems}], got {n_c}")

    pts = mesh.nodes[mesh.tets]                  # (E, 4, 3)
    centroid = pts.mean(axis=1)
    lo = pts.min(axis=1)
    hi = pts.max(axis=1)

    elem_owner = np.zeros(mesh.n_elems, dtype=np.int64)
    # (element ids, first rank, rank count) work list
    stack = [(np.arange(mesh.n_elems), 0, n_c)]
    while stack:
        elems, rank0, k = stack.pop()
        if k == 1:
            elem_owner[elems] = rank0
            continue
        k_left = k // 2
        left, right = _split_group(elems, lo, hi, centroid, k_left, k - k_left)
        stack.append((left, rank0, k_left))
        stack.append((right, rank0 + k_left, k - k_left))

    local_nodes = []
    owner_sets: dict[int, set[int]] = {}
    for r in range(n_c):
        nodes_r = np.unique(mesh.tets[elem_owner == r])
        local_nodes.append(nodes_r.astype(np.int64))
        for node in nodes_r:
            owner_sets.setdefault(int(node), set()).add(r)

    node_owners = {node: tuple(sorted(owners))
                   for node, owners in owner_sets.items() if len(owners) >= 2}
    shared_nodes = []
    for r in range(n_c):
        shared_r = np.array(sorted(n for n, owners in node_owners.items()
                                   if r in owners), dtype=np.int64)
        shared_nodes.append(shared_r)

    return Partition(n_ranks=n_c, elem_owner=elem_owner,
                     local_nodes=local_nodes, shared_nodes=shared_nodes,
                     node_owners=node_owners)
