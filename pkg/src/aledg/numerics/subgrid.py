from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Tuple

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class SubnodeKind(IntEnum):
    """Position of a subnode relative to the main triangle."""

    VERTEX = 0
    FACE = 1
    INTERNAL = 2


@dataclass(frozen=True)
class SubGrid:
    """Uniform simplex subdivision of the reference triangle.

    Every edge of the unit triangle is split into ``n_sub = 2N + 1`` pieces;
    the resulting lattice carries ``n_sub**2`` subcells. Reference edges are
    numbered counterclockwise: edge 0 joins vertices 0 and 1, edge 1 joins
    vertices 1 and 2 and edge 2 joins vertices 2 and 0.

    Attributes:
        degree (int): Polynomial degree N the subgrid belongs to.
        n_sub (int): Number of sub-edges per main edge.
        nodes (FloatArray): Reference coordinates of the subnodes, (K, 2).
        subcells (IntArray): Counterclockwise local subnode triples, (S, 3).
        kinds (IntArray): ``SubnodeKind`` of every subnode, (K,).
        node_edge (IntArray): Reference edge of face subnodes, -1 otherwise.
        vertex_nodes (IntArray): Local indices of the three vertex subnodes.
        edge_nodes (IntArray): Subnodes along each edge in counterclockwise
            order, (3, n_sub + 1).
        subface_subcell (IntArray): Subcell adjacent to subface j of edge e,
            (3, n_sub).
        subface_local_edge (IntArray): Local edge of that subcell lying on
            the subface, (3, n_sub).
        subcell_neighbors (IntArray): Neighbor subcell across each local edge
            of a subcell or -1 when the edge lies on the main boundary.
        subcell_boundary (IntArray): ``(edge, subface)`` for local edges on
            the main boundary, -1 otherwise, (S, 3, 2).
        interior_edges (IntArray): Subcell edges shared inside the cell as
            ``(s1, a1, s2, a2)`` rows, listed once.
        node_subcells (List[IntArray]): Subcells incident to every subnode.
    """

    degree: int
    n_sub: int
    nodes: FloatArray
    subcells: IntArray
    kinds: IntArray
    node_edge: IntArray
    vertex_nodes: IntArray
    edge_nodes: IntArray
    subface_subcell: IntArray
    subface_local_edge: IntArray
    subcell_neighbors: IntArray
    subcell_boundary: IntArray
    interior_edges: IntArray
    node_subcells: Tuple[IntArray, ...]

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_subcells(self) -> int:
        return int(self.subcells.shape[0])

    @property
    def reference_areas(self) -> FloatArray:
        return signed_areas(self.nodes[self.subcells])

    @property
    def internal_nodes(self) -> IntArray:
        return np.flatnonzero(self.kinds == SubnodeKind.INTERNAL)

    @property
    def perimeter_nodes(self) -> IntArray:
        return np.flatnonzero(self.kinds != SubnodeKind.INTERNAL)


def signed_areas(triangles: FloatArray) -> FloatArray:
    """Return the signed area of triangles stored as (..., 3, 2) arrays."""
    e1 = triangles[..., 1, :] - triangles[..., 0, :]
    e2 = triangles[..., 2, :] - triangles[..., 0, :]
    return 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


def edge_matrices(triangles: FloatArray) -> FloatArray:
    """Return ``[X2 - X1, X3 - X1]`` as column matrices, shape (..., 2, 2)."""
    e1 = triangles[..., 1, :] - triangles[..., 0, :]
    e2 = triangles[..., 2, :] - triangles[..., 0, :]
    return np.stack([e1, e2], axis=-1)


def _node_index(n_sub: int) -> Dict[Tuple[int, int], int]:
    index: Dict[Tuple[int, int], int] = {}
    for p in range(n_sub + 1):
        for k in range(n_sub + 1 - p):
            index[(k, p)] = len(index)
    return index


def build_subgrid(degree: int) -> SubGrid:
    """Build the reference subgrid for polynomial degree ``degree``.

    Args:
        degree (int): Polynomial degree N, 1 <= N <= 3.

    Returns:
        SubGrid: Lattice, connectivity, kinds and adjacency tables.

    Raises:
        ValueError: If the degree is outside the supported range.
    """
    if not 1 <= degree <= 3:
        raise ValueError(f"Unsupported subgrid degree {degree}")

    n_sub = 2 * degree + 1
    index = _node_index(n_sub)
    nodes = np.zeros((len(index), 2))
    kinds = np.full(len(index), SubnodeKind.INTERNAL, dtype=np.int64)
    node_edge = np.full(len(index), -1, dtype=np.int64)
    for (k, p), i in index.items():
        nodes[i] = (k / n_sub, p / n_sub)
        on_edge = (p == 0, k + p == n_sub, k == 0)
        count = sum(on_edge)
        if count >= 2:
            kinds[i] = SubnodeKind.VERTEX
        elif count == 1:
            kinds[i] = SubnodeKind.FACE
            node_edge[i] = on_edge.index(True)

    cells: List[Tuple[int, int, int]] = []
    for p in range(n_sub):
        for k in range(n_sub - p):
            cells.append((index[(k, p)], index[(k + 1, p)], index[(k, p + 1)]))
            if k + p <= n_sub - 2:
                cells.append(
                    (
                        index[(k + 1, p)],
                        index[(k + 1, p + 1)],
                        index[(k, p + 1)],
                    )
                )
    subcells = np.array(cells, dtype=np.int64)

    edge_nodes = np.array(
        [
            [index[(j, 0)] for j in range(n_sub + 1)],
            [index[(n_sub - j, j)] for j in range(n_sub + 1)],
            [index[(0, n_sub - j)] for j in range(n_sub + 1)],
        ],
        dtype=np.int64,
    )
    vertex_nodes = edge_nodes[:, 0].copy()

    half_edges: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for s, tri in enumerate(subcells):
        for a in range(3):
            half_edges[(int(tri[a]), int(tri[(a + 1) % 3]))] = (s, a)

    n_cells = subcells.shape[0]
    neighbors = np.full((n_cells, 3), -1, dtype=np.int64)
    boundary = np.full((n_cells, 3, 2), -1, dtype=np.int64)
    interior: List[Tuple[int, int, int, int]] = []
    for (i, j), (s, a) in half_edges.items():
        twin = half_edges.get((j, i))
        if twin is not None:
            neighbors[s, a] = twin[0]
            if s < twin[0]:
                interior.append((s, a, twin[0], twin[1]))

    subface_subcell = np.zeros((3, n_sub), dtype=np.int64)
    subface_local_edge = np.zeros((3, n_sub), dtype=np.int64)
    for e in range(3):
        for j in range(n_sub):
            s, a = half_edges[
                (int(edge_nodes[e, j]), int(edge_nodes[e, j + 1]))
            ]
            subface_subcell[e, j] = s
            subface_local_edge[e, j] = a
            boundary[s, a] = (e, j)

    node_subcells = tuple(
        np.flatnonzero(np.any(subcells == i, axis=1))
        for i in range(len(index))
    )

    return SubGrid(
        degree=degree,
        n_sub=n_sub,
        nodes=nodes,
        subcells=subcells,
        kinds=kinds,
        node_edge=node_edge,
        vertex_nodes=vertex_nodes,
        edge_nodes=edge_nodes,
        subface_subcell=subface_subcell,
        subface_local_edge=subface_local_edge,
        subcell_neighbors=neighbors,
        subcell_boundary=boundary,
        interior_edges=np.array(sorted(interior), dtype=np.int64),
        node_subcells=node_subcells,
    )


def subcell_map(
    cell_subnode_positions: FloatArray,
    subgrid: SubGrid,
    local_subcell: int,
    xi_local: FloatArray,
) -> FloatArray:
    """Map local subcell coordinates to physical space.

    Args:
        cell_subnode_positions (FloatArray): Positions of the cell's K
            subnodes, (K, 2).
        subgrid (SubGrid): Reference subgrid of the cell.
        local_subcell (int): Subcell index.
        xi_local (FloatArray): Points in the unit triangle, (..., 2).

    Returns:
        FloatArray: Physical coordinates ``X1 + (X2 - X1) xi + (X3 - X1) eta``.
    """
    x1, x2, x3 = cell_subnode_positions[subgrid.subcells[local_subcell]]
    xi = np.asarray(xi_local, dtype=float)
    return (
        x1
        + (x2 - x1) * xi[..., 0, np.newaxis]
        + (x3 - x1) * xi[..., 1, np.newaxis]
    )
