"""Global subnode numbering and neighborhoods of a mesh with subgrids.

Every cell carries the same reference subgrid. Subnodes shared by cells
(mesh vertices and subnodes on shared edges) get one global index, so a
single position array describes the whole continuous mesh. Positions are
stored in the frame of an owner cell; ``shifts`` holds the constant
periodic translation between that frame and every other cell's frame.
"""

from dataclasses import dataclass
from typing import Dict, Hashable, List, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.exceptions import TangledMeshError
from src.aledg.numerics.mesh import TriMesh
from src.aledg.numerics.subgrid import (
    SubGrid,
    SubnodeKind,
    edge_matrices,
    signed_areas,
)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


@dataclass(frozen=True)
class SubGridTopology:
    """Connectivity of the global subnode set.

    Attributes:
        subgrid (SubGrid): Reference subgrid shared by all cells.
        l2g (IntArray): Global subnode of every (cell, local subnode).
        shifts (FloatArray): Translation from the owner frame of a global
            subnode into the frame of the cell, (C, K, 2).
        faces (IntArray): ``(cell_l, edge_l, cell_r, edge_r)`` per main face,
            with ``cell_r = edge_r = -1`` on the domain boundary.
        face_tags (IntArray): ``BoundaryTag`` per face.
        face_offsets (FloatArray): Translation from the right cell frame into
            the left cell frame, (F, 2).
        cell_faces (IntArray): Face of every cell edge, (C, 3).
        cell_face_sides (IntArray): 0 if the cell is the left side of that
            face, 1 otherwise.
        node_ptr (IntArray): CSR pointer over global subnodes.
        node_cells (IntArray): Cells containing each global subnode.
        node_locals (IntArray): Local index inside those cells.
        kinds (IntArray): ``SubnodeKind`` per global subnode.
        boundary_nodes (IntArray): Global subnodes on the domain boundary.
        node_boundary_faces (Dict[int, Tuple[int, ...]]): Boundary faces
            touching each boundary subnode.
        cell_nbr_ptr (IntArray): CSR pointer of cells sharing a vertex.
        cell_nbr_idx (IntArray): Those cells, each cell included.
        patch_ptr (IntArray): CSR pointer of subcells incident to each
            global subnode.
        patch_cells (IntArray): Cell of each incident subcell.
        patch_subcells (IntArray): Local subcell index.
        patch_corners (IntArray): Corner of the subcell at the subnode.
        colors (Tuple[IntArray, ...]): Interior subnodes grouped so that no
            two nodes of one group share a subcell.
    """

    subgrid: SubGrid
    l2g: IntArray
    shifts: FloatArray
    faces: IntArray
    face_tags: IntArray
    face_offsets: FloatArray
    cell_faces: IntArray
    cell_face_sides: IntArray
    node_ptr: IntArray
    node_cells: IntArray
    node_locals: IntArray
    kinds: IntArray
    boundary_nodes: IntArray
    node_boundary_faces: Dict[int, Tuple[int, ...]]
    cell_nbr_ptr: IntArray
    cell_nbr_idx: IntArray
    patch_ptr: IntArray
    patch_cells: IntArray
    patch_subcells: IntArray
    patch_corners: IntArray
    colors: Tuple[IntArray, ...]

    @property
    def n_cells(self) -> int:
        return int(self.l2g.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.kinds.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def cell_neighborhood(self, cell: int) -> IntArray:
        return self.cell_nbr_idx[
            self.cell_nbr_ptr[cell] : self.cell_nbr_ptr[cell + 1]
        ]

    def node_neighborhood(self, node: int) -> Tuple[IntArray, IntArray]:
        """Return (cells, local indices) of the main cells holding ``node``."""
        lo, hi = self.node_ptr[node], self.node_ptr[node + 1]
        return self.node_cells[lo:hi], self.node_locals[lo:hi]


def _csr(groups: List[List[int]]) -> Tuple[IntArray, IntArray]:
    ptr = np.zeros(len(groups) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(g) for g in groups])
    flat = [x for g in groups for x in g]
    return ptr, np.array(flat, dtype=np.int64)


def reference_positions(mesh: TriMesh, subgrid: SubGrid) -> FloatArray:
    """Subnode positions of straight cells, (C, K, 2)."""
    verts = mesh.cell_vertices()
    jac = edge_matrices(verts)
    return verts[:, np.newaxis, 0, :] + np.einsum(
        "cij,kj->cki", jac, subgrid.nodes
    )


def _wrap(delta: FloatArray, periods: Tuple[float, float]) -> FloatArray:
    out = np.zeros_like(delta)
    for axis, length in enumerate(periods):
        if length > 0.0:
            out[..., axis] = np.round(delta[..., axis] / length) * length
    return out


def build_topology(mesh: TriMesh, subgrid: SubGrid) -> SubGridTopology:
    """Number subnodes globally and build all neighborhood tables.

    Args:
        mesh (TriMesh): Main mesh.
        subgrid (SubGrid): Reference subgrid.

    Returns:
        SubGridTopology: Tables used by the solver, limiter and motion.
    """
    n_cells = mesh.n_cells
    n_sub = subgrid.n_sub
    n_local = subgrid.n_nodes
    positions = reference_positions(mesh, subgrid)

    faces: List[Tuple[int, int, int, int]] = []
    face_tags: List[int] = []
    cell_faces = np.full((n_cells, 3), -1, dtype=np.int64)
    cell_face_sides = np.zeros((n_cells, 3), dtype=np.int64)
    for c in range(n_cells):
        for e in range(3):
            if cell_faces[c, e] >= 0:
                continue
            nb = int(mesh.neighbors[c, e])
            ne = int(mesh.neighbor_edges[c, e])
            cell_faces[c, e] = len(faces)
            if nb >= 0:
                cell_faces[nb, ne] = len(faces)
                cell_face_sides[nb, ne] = 1
            faces.append((c, e, nb, ne))
            face_tags.append(int(mesh.edge_tags[c, e]))
    face_arr = np.array(faces, dtype=np.int64)

    keys: Dict[Hashable, int] = {}
    l2g = np.zeros((n_cells, n_local), dtype=np.int64)
    owner: List[Tuple[int, int]] = []
    edge_pos = {
        int(subgrid.edge_nodes[e, j]): (e, j)
        for e in range(3)
        for j in range(1, n_sub)
    }
    for c in range(n_cells):
        for k in range(n_local):
            kind = subgrid.kinds[k]
            key: Hashable
            if kind == SubnodeKind.VERTEX:
                a = int(np.flatnonzero(subgrid.vertex_nodes == k)[0])
                key = ("v", int(mesh.vertex_ids[mesh.cells[c, a]]))
            elif kind == SubnodeKind.FACE:
                e, j = edge_pos[k]
                f = int(cell_faces[c, e])
                if cell_face_sides[c, e] == 1:
                    j = n_sub - j
                key = ("f", f, j)
            else:
                key = ("i", c, k)
            g = keys.get(key)
            if g is None:
                g = keys[key] = len(owner)
                owner.append((c, k))
            l2g[c, k] = g

    owner_arr = np.array(owner, dtype=np.int64)
    origin = positions[owner_arr[:, 0], owner_arr[:, 1]]
    shifts = _wrap(positions - origin[l2g], mesh.periods)

    face_offsets = np.zeros((face_arr.shape[0], 2))
    interior = face_arr[:, 2] >= 0
    first = subgrid.edge_nodes[face_arr[interior, 1], 0]
    last = subgrid.edge_nodes[face_arr[interior, 3], n_sub]
    face_offsets[interior] = (
        positions[face_arr[interior, 0], first]
        - positions[face_arr[interior, 2], last]
    )

    n_global = len(owner)
    kinds = subgrid.kinds[owner_arr[:, 1]]
    node_groups: List[List[int]] = [[] for _ in range(n_global)]
    for c in range(n_cells):
        for k in range(n_local):
            node_groups[l2g[c, k]].append(c * n_local + k)
    node_ptr, flat = _csr(node_groups)

    node_boundary: Dict[int, List[int]] = {}
    for f in np.flatnonzero(~interior):
        c, e = int(face_arr[f, 0]), int(face_arr[f, 1])
        for k in subgrid.edge_nodes[e]:
            node_boundary.setdefault(int(l2g[c, k]), []).append(int(f))

    vertex_cells: Dict[int, List[int]] = {}
    for c in range(n_cells):
        for v in mesh.vertex_ids[mesh.cells[c]]:
            vertex_cells.setdefault(int(v), []).append(c)
    cell_groups = [
        sorted(
            {
                nb
                for v in mesh.vertex_ids[mesh.cells[c]]
                for nb in vertex_cells[int(v)]
            }
        )
        for c in range(n_cells)
    ]
    cell_nbr_ptr, cell_nbr_idx = _csr(cell_groups)

    patch_groups: List[List[int]] = [[] for _ in range(n_global)]
    n_subcells = subgrid.n_subcells
    for c in range(n_cells):
        for s in range(n_subcells):
            for a in range(3):
                g = l2g[c, subgrid.subcells[s, a]]
                patch_groups[g].append((c * n_subcells + s) * 3 + a)
    patch_ptr, patch_flat = _csr(patch_groups)

    boundary_nodes = np.array(sorted(node_boundary), dtype=np.int64)
    colors = _color_nodes(
        n_global, patch_groups, l2g, subgrid, set(node_boundary)
    )

    return SubGridTopology(
        subgrid=subgrid,
        l2g=l2g,
        shifts=shifts,
        faces=face_arr,
        face_tags=np.array(face_tags, dtype=np.int64),
        face_offsets=face_offsets,
        cell_faces=cell_faces,
        cell_face_sides=cell_face_sides,
        node_ptr=node_ptr,
        node_cells=flat // n_local,
        node_locals=flat % n_local,
        kinds=kinds,
        boundary_nodes=boundary_nodes,
        node_boundary_faces={g: tuple(fs) for g, fs in node_boundary.items()},
        cell_nbr_ptr=cell_nbr_ptr,
        cell_nbr_idx=cell_nbr_idx,
        patch_ptr=patch_ptr,
        patch_cells=patch_flat // (3 * n_subcells),
        patch_subcells=(patch_flat // 3) % n_subcells,
        patch_corners=patch_flat % 3,
        colors=colors,
    )


def _color_nodes(
    n_global: int,
    patch_groups: List[List[int]],
    l2g: IntArray,
    subgrid: SubGrid,
    fixed: set[int],
) -> Tuple[IntArray, ...]:
    n_subcells = subgrid.n_subcells
    color = np.full(n_global, -1, dtype=np.int64)
    for g in range(n_global):
        if g in fixed:
            continue
        taken = set()
        for entry in patch_groups[g]:
            c, s = divmod(entry // 3, n_subcells)
            for k in subgrid.subcells[s]:
                taken.add(int(color[l2g[c, k]]))
        col = 0
        while col in taken:
            col += 1
        color[g] = col
    n_colors = int(color.max()) + 1 if n_global else 0
    return tuple(np.flatnonzero(color == col) for col in range(n_colors))


def voronoi_neighborhoods(
    topology: SubGridTopology,
) -> Tuple[List[IntArray], List[IntArray]]:
    """Main cells and subcells around every global subnode.

    Returns:
        Tuple[List[IntArray], List[IntArray]]: For each global subnode the
        main cells containing it and the global subcell indices
        ``cell * S + s`` of the subcells containing it.
    """
    n_subcells = topology.subgrid.n_subcells
    cells = [
        np.unique(topology.node_neighborhood(g)[0])
        for g in range(topology.n_nodes)
    ]
    subcells = [
        topology.patch_cells[lo:hi] * n_subcells
        + topology.patch_subcells[lo:hi]
        for lo, hi in zip(topology.patch_ptr[:-1], topology.patch_ptr[1:])
    ]
    return cells, subcells


def cell_subnode_positions(
    topology: SubGridTopology, global_positions: FloatArray
) -> FloatArray:
    """Positions of every cell's subnodes in the cell frame, (C, K, 2)."""
    return global_positions[topology.l2g] + topology.shifts


def subcell_corners(
    topology: SubGridTopology, global_positions: FloatArray
) -> FloatArray:
    """Physical subcell corners, (C, S, 3, 2)."""
    cell_pos = cell_subnode_positions(topology, global_positions)
    return cell_pos[:, topology.subgrid.subcells]


def subcell_areas(
    topology: SubGridTopology, global_positions: FloatArray
) -> FloatArray:
    """Signed physical subcell areas, (C, S)."""
    return signed_areas(subcell_corners(topology, global_positions))


@dataclass(frozen=True)
class MeshSnapshots:
    """Global subnode positions at both ends of a time step.

    The space-time geometry is the linear interpolation
    ``X(tau) = (1 - tau) X^n + tau X^{n+1}`` with ``t = t^n + tau dt``.
    """

    old: FloatArray
    new: FloatArray
    dt: float

    def at(self, tau: float) -> FloatArray:
        return (1.0 - tau) * self.old + tau * self.new

    def validate(self, topology: SubGridTopology) -> None:
        """Raise ``TangledMeshError`` if any subcell is not positive."""
        for label, pos in (("t^n", self.old), ("t^n+1", self.new)):
            areas = subcell_areas(topology, pos)
            if not np.all(areas > 0.0):
                bad = int(np.count_nonzero(areas <= 0.0))
                raise TangledMeshError(
                    f"{bad} subcells with non-positive area at {label}"
                )


def initial_positions(mesh: TriMesh, topology: SubGridTopology) -> FloatArray:
    """Global subnode positions of the initial mesh.

    Cells are straight-sided except along boundary edges tagged in
    ``mesh.arc_tags``, whose subnodes are moved radially onto the circle
    through the two edge vertices.
    """
    positions = reference_positions(mesh, topology.subgrid)
    out = np.zeros((topology.n_nodes, 2))
    out[topology.l2g] = positions - topology.shifts
    if mesh.arc_tags:
        _snap_arc_subnodes(out, mesh, topology)
    return out


def _snap_arc_subnodes(
    positions: FloatArray, mesh: TriMesh, topology: SubGridTopology
) -> None:
    faces = topology.faces
    on_arc = (faces[:, 2] < 0) & np.isin(topology.face_tags, mesh.arc_tags)
    cells, edges = faces[on_arc, 0], faces[on_arc, 1]
    ends = mesh.nodes[
        mesh.cells[cells[:, None], np.column_stack([edges, (edges + 1) % 3])]
    ]
    radius = np.linalg.norm(ends, axis=-1).mean(axis=1)
    nodes = topology.l2g[cells[:, None], topology.subgrid.edge_nodes[edges]]
    points = positions[nodes]
    scale = radius[:, None] / np.linalg.norm(points, axis=-1)
    positions[nodes] = points * scale[..., None]
