import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import Delaunay, cKDTree

from src.aledg.numerics.exceptions import (
    DegenerateGeometryError,
    MeshFormatError,
)
from src.aledg.numerics.subgrid import signed_areas

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

logger = logging.getLogger(__name__)

PERIODIC_SNAP = 1e-9


class BoundaryTag(IntEnum):
    """Edge tags; INTERIOR marks edges shared by two cells."""

    INTERIOR = 0
    PERIODIC = 1
    TRANSMISSIVE = 2
    SLIP_WALL = 3
    MOVING_WALL = 4
    EXACT_DIRICHLET = 5

    @classmethod
    def parse(cls, value: Union[str, int]) -> "BoundaryTag":
        if isinstance(value, str) and not value.lstrip("-").isdigit():
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise MeshFormatError(
                    f"Unknown boundary tag '{value}'"
                ) from None
        return cls(int(value))


@dataclass(frozen=True)
class TriMesh:
    """Unstructured triangular mesh with face adjacency.

    Raw node and cell arrays are kept as read or generated, so periodic
    copies of nodes on opposite sides stay in the arrays. ``vertex_ids``
    maps every raw node to its identified vertex; connectivity is built on
    identified vertices while geometry is read from the raw positions, which
    keeps every cell in its own unwrapped frame.

    Attributes:
        nodes (FloatArray): Raw node coordinates, (n_nodes, 2).
        cells (IntArray): Counterclockwise raw node triples, (n_cells, 3).
        vertex_ids (IntArray): Identified vertex of each raw node.
        boundary_edges (IntArray): Raw node pairs of tagged edges, (nb, 2).
        boundary_edge_tags (IntArray): ``BoundaryTag`` of each tagged edge.
        periods (Tuple[float, float]): Period lengths, 0 where not periodic.
        neighbors (IntArray): Neighbor across edge e (vertices e and e+1),
            -1 on the boundary, (n_cells, 3).
        neighbor_edges (IntArray): Local edge index inside the neighbor.
        edge_tags (IntArray): ``BoundaryTag`` per cell edge, INTERIOR for
            shared edges.
        arc_tags (Tuple[int, ...]): Tags of boundary edges lying on circles
            about the origin; subnodes on those edges are placed on the
            circle instead of the chord.
    """

    nodes: FloatArray
    cells: IntArray
    vertex_ids: IntArray
    boundary_edges: IntArray
    boundary_edge_tags: IntArray
    periods: Tuple[float, float]
    neighbors: IntArray
    neighbor_edges: IntArray
    edge_tags: IntArray
    metadata: Dict[str, float] = field(default_factory=dict)
    arc_tags: Tuple[int, ...] = ()

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def n_vertices(self) -> int:
        return int(self.vertex_ids.max()) + 1

    def cell_vertices(self) -> FloatArray:
        return self.nodes[self.cells]

    def cell_areas(self) -> FloatArray:
        return signed_areas(self.cell_vertices())


def incircle_diameter(vertices: FloatArray) -> FloatArray:
    """Return ``4 * area / perimeter`` for triangles stored as (..., 3, 2).

    Raises:
        DegenerateGeometryError: If any triangle has zero or negative area.
    """
    area = signed_areas(vertices)
    if np.any(area <= 0.0):
        raise DegenerateGeometryError("Degenerate triangle in incircle")
    perimeter = sum(
        np.linalg.norm(
            vertices[..., (a + 1) % 3, :] - vertices[..., a, :], axis=-1
        )
        for a in range(3)
    )
    return 4.0 * area / perimeter


def circumcircle_diameter(vertices: FloatArray) -> FloatArray:
    """Return ``abc / (2 * area)`` for triangles stored as (..., 3, 2)."""
    area = signed_areas(vertices)
    if np.any(area <= 0.0):
        raise DegenerateGeometryError("Degenerate triangle in circumcircle")
    sides = [
        np.linalg.norm(
            vertices[..., (a + 1) % 3, :] - vertices[..., a, :], axis=-1
        )
        for a in range(3)
    ]
    return sides[0] * sides[1] * sides[2] / (2.0 * area)


def _identify_periodic_nodes(
    nodes: FloatArray, periods: Tuple[float, float]
) -> IntArray:
    canonical = np.arange(nodes.shape[0], dtype=np.int64)
    extent = float(np.ptp(nodes, axis=0).max()) if nodes.size else 1.0
    tol = PERIODIC_SNAP * max(extent, 1.0)
    tree = cKDTree(nodes)
    for axis, length in enumerate(periods):
        if length <= 0.0:
            continue
        high = np.flatnonzero(
            np.abs(nodes[:, axis] - (nodes[:, axis].min() + length)) < tol
        )
        targets = nodes[high].copy()
        targets[:, axis] -= length
        dist, idx = tree.query(targets)
        if np.any(dist > tol):
            raise MeshFormatError(
                f"Periodic node without partner along axis {axis}"
            )
        canonical[high] = idx
    while True:
        resolved = canonical[canonical]
        if np.array_equal(resolved, canonical):
            break
        canonical = resolved
    _, compact = np.unique(canonical, return_inverse=True)
    return compact.astype(np.int64)


def build_mesh(
    nodes: FloatArray,
    cells: IntArray,
    boundary_edges: IntArray,
    boundary_tags: IntArray,
    periods: Tuple[float, float] = (0.0, 0.0),
    metadata: Optional[Dict[str, float]] = None,
) -> TriMesh:
    """Validate raw arrays and build adjacency.

    Args:
        nodes (FloatArray): Node coordinates, (n, 2).
        cells (IntArray): Node triples, (m, 3); must be counterclockwise.
        boundary_edges (IntArray): Node pairs of the domain boundary.
        boundary_tags (IntArray): ``BoundaryTag`` values of those pairs.
        periods (Tuple[float, float]): Period lengths along x and y.
        metadata (Optional[Dict[str, float]]): Generator parameters.

    Returns:
        TriMesh: Mesh with neighbors and edge tags.

    Raises:
        MeshFormatError: On inverted, non-conforming or untagged edges.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
    boundary_tags = np.asarray(boundary_tags, dtype=np.int64).reshape(-1)
    if cells.size == 0:
        raise MeshFormatError("Mesh has no cells")
    if cells.min() < 0 or cells.max() >= nodes.shape[0]:
        raise MeshFormatError("Cell references an unknown node")
    if np.any(signed_areas(nodes[cells]) <= 0.0):
        raise MeshFormatError("Inverted or degenerate cell")

    vertex_ids = _identify_periodic_nodes(nodes, periods)
    tag_lookup: Dict[Tuple[int, int], int] = {}
    for (a, b), tag in zip(boundary_edges.tolist(), boundary_tags.tolist()):
        tag_lookup[(min(a, b), max(a, b))] = int(tag)

    scale = 1.0 / (PERIODIC_SNAP * max(float(np.ptp(nodes)), 1.0))
    half_edges: Dict[
        Tuple[int, int, int, int], List[Tuple[int, int, bool]]
    ] = {}
    for c, tri in enumerate(cells.tolist()):
        for e in range(3):
            a, b = tri[e], tri[(e + 1) % 3]
            va, vb = int(vertex_ids[a]), int(vertex_ids[b])
            d = nodes[b] - nodes[a]
            forward = va < vb
            if not forward:
                va, vb, d = vb, va, -d
            key = (va, vb, int(round(d[0] * scale)), int(round(d[1] * scale)))
            half_edges.setdefault(key, []).append((c, e, forward))

    n_cells = cells.shape[0]
    neighbors = np.full((n_cells, 3), -1, dtype=np.int64)
    neighbor_edges = np.full((n_cells, 3), -1, dtype=np.int64)
    edge_tags = np.full((n_cells, 3), BoundaryTag.INTERIOR, dtype=np.int64)
    for entries in half_edges.values():
        if len(entries) == 2:
            (c1, e1, f1), (c2, e2, f2) = entries
            if f1 == f2:
                raise MeshFormatError(
                    f"Cells {c1} and {c2} share an edge with equal orientation"
                )
            neighbors[c1, e1], neighbor_edges[c1, e1] = c2, e2
            neighbors[c2, e2], neighbor_edges[c2, e2] = c1, e1
        elif len(entries) == 1:
            c, e, _ = entries[0]
            a, b = int(cells[c, e]), int(cells[c, (e + 1) % 3])
            tag = tag_lookup.get((min(a, b), max(a, b)))
            if tag is None:
                raise MeshFormatError(f"Untagged boundary edge ({a}, {b})")
            if tag == BoundaryTag.PERIODIC:
                raise MeshFormatError(
                    f"Periodic edge ({a}, {b}) has no partner"
                )
            edge_tags[c, e] = tag
        else:
            raise MeshFormatError("Edge shared by more than two cells")

    return TriMesh(
        nodes=nodes,
        cells=cells,
        vertex_ids=vertex_ids,
        boundary_edges=boundary_edges,
        boundary_edge_tags=boundary_tags,
        periods=(float(periods[0]), float(periods[1])),
        neighbors=neighbors,
        neighbor_edges=neighbor_edges,
        edge_tags=edge_tags,
        metadata=dict(metadata or {}),
    )


SIDES = ("bottom", "right", "top", "left")


def generate_structured_mesh(
    nx: int,
    ny: int,
    extents: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    periodic: Tuple[bool, bool] = (False, False),
    side_tags: Optional[Mapping[str, BoundaryTag]] = None,
    diagonal: str = "\\",
    transform: Optional[Callable[[FloatArray], FloatArray]] = None,
) -> TriMesh:
    """Split an nx-by-ny box of quads into 2*nx*ny triangles.

    Args:
        nx (int): Quads along x.
        ny (int): Quads along y.
        extents (Tuple[float, float, float, float]): (x0, x1, y0, y1).
        periodic (Tuple[bool, bool]): Periodicity along x and y.
        side_tags (Optional[Mapping[str, BoundaryTag]]): Tag per side name
            (bottom, right, top, left); transmissive by default.
        diagonal (str): "\\" splits from (i+1, j) to (i, j+1), "/" from
            (i, j) to (i+1, j+1).
        transform (Optional[Callable]): Node displacement applied before
            splitting, e.g. a skew.

    Returns:
        TriMesh: Validated mesh.

    Raises:
        ValueError: On invalid counts or diagonal choice.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    if diagonal not in ("\\", "/"):
        raise ValueError(f"Unknown diagonal '{diagonal}'")
    x0, x1, y0, y1 = extents
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    if transform is not None:
        nodes = transform(nodes)

    def nid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    cells: List[Tuple[int, int, int]] = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = nid(i, j), nid(i + 1, j)
            v01, v11 = nid(i, j + 1), nid(i + 1, j + 1)
            if diagonal == "\\":
                cells += [(v00, v10, v01), (v10, v11, v01)]
            else:
                cells += [(v00, v10, v11), (v00, v11, v01)]

    tags = {side: BoundaryTag.TRANSMISSIVE for side in SIDES}
    tags.update(side_tags or {})
    if periodic[0]:
        tags["left"] = tags["right"] = BoundaryTag.PERIODIC
    if periodic[1]:
        tags["bottom"] = tags["top"] = BoundaryTag.PERIODIC

    edges: List[Tuple[int, int]] = []
    edge_tags: List[int] = []
    for i in range(nx):
        edges += [(nid(i, 0), nid(i + 1, 0)), (nid(i, ny), nid(i + 1, ny))]
        edge_tags += [tags["bottom"], tags["top"]]
    for j in range(ny):
        edges += [(nid(0, j), nid(0, j + 1)), (nid(nx, j), nid(nx, j + 1))]
        edge_tags += [tags["left"], tags["right"]]

    periods = (
        x1 - x0 if periodic[0] else 0.0,
        y1 - y0 if periodic[1] else 0.0,
    )
    return build_mesh(
        nodes,
        np.array(cells),
        np.array(edges),
        np.array(edge_tags),
        periods=periods,
        metadata={"nx": float(nx), "ny": float(ny)},
    )


def generate_annulus_sector_mesh(
    n_radial: int,
    n_angular: int,
    r_inner: float,
    r_outer: float,
    theta_max: float = 0.5 * math.pi,
    arc_tag: BoundaryTag = BoundaryTag.EXACT_DIRICHLET,
    side_tag: BoundaryTag = BoundaryTag.SLIP_WALL,
) -> TriMesh:
    """Polar grid on an annular sector, split into triangles.

    The (r, theta) -> (x, y) map preserves orientation, so the structured
    split stays counterclockwise. Both arcs are registered in ``arc_tags``.
    """
    if not 0.0 < r_inner < r_outer:
        raise ValueError("Require 0 < r_inner < r_outer")

    def to_cartesian(rt: FloatArray) -> FloatArray:
        r, theta = rt[:, 0], rt[:, 1]
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    mesh = generate_structured_mesh(
        n_radial,
        n_angular,
        extents=(r_inner, r_outer, 0.0, theta_max),
        side_tags={
            "left": arc_tag,
            "right": arc_tag,
            "bottom": side_tag,
            "top": side_tag,
        },
        transform=to_cartesian,
    )
    return replace(mesh, arc_tags=(int(arc_tag),))


def generate_disc_mesh(
    radius: float,
    n_rings: int,
    tag: BoundaryTag = BoundaryTag.TRANSMISSIVE,
    seed: int = 0,
) -> TriMesh:
    """Delaunay triangulation of concentric point rings inside a disc.

    Interior points are jittered by a small deterministic amount to avoid
    cocircular point sets; the outer ring stays on the circle.
    """
    if n_rings < 1:
        raise ValueError("n_rings must be at least 1")
    rng = np.random.default_rng(seed)
    spacing = radius / n_rings
    points = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        count = 6 * k
        theta = 2.0 * math.pi * (np.arange(count) + 0.5 * (k % 2)) / count
        ring = radius * k / n_rings * np.column_stack(
            [np.cos(theta), np.sin(theta)]
        )
        if k < n_rings:
            ring += rng.uniform(-0.1, 0.1, ring.shape) * spacing
        points.append(ring)
    nodes = np.vstack(points)
    triangulation = Delaunay(nodes)
    cells = triangulation.simplices.astype(np.int64)
    areas = signed_areas(nodes[cells])
    cells[areas < 0.0] = cells[areas < 0.0][:, [0, 2, 1]]
    cells = cells[np.abs(areas) > 1e-14 * radius**2]
    hull = triangulation.convex_hull.astype(np.int64)
    return build_mesh(
        nodes,
        cells,
        hull,
        np.full(hull.shape[0], int(tag)),
        metadata={"rings": float(n_rings), "radius": radius},
    )


def save_mesh(mesh: TriMesh, path: Union[str, Path]) -> None:
    """Write the mesh in the plain-text node/cell/boundary format."""
    lines = [f"nodes {mesh.nodes.shape[0]}"]
    lines += [
        f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())
    ]
    lines.append(f"cells {mesh.n_cells}")
    lines += [
        f"{i} {a} {b} {c}"
        for i, (a, b, c) in enumerate(mesh.cells.tolist())
    ]
    lines.append(f"boundary {mesh.boundary_edges.shape[0]}")
    lines += [
        f"{a} {b} {BoundaryTag(tag).name.lower()}"
        for (a, b), tag in zip(
            mesh.boundary_edges.tolist(), mesh.boundary_edge_tags.tolist()
        )
    ]
    if any(p > 0.0 for p in mesh.periods):
        lines.append(f"periods {mesh.periods[0]!r} {mesh.periods[1]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _section(lines: List[str], pos: int, name: str) -> Tuple[int, int]:
    if pos >= len(lines):
        raise MeshFormatError(f"Missing '{name}' section")
    head = lines[pos].split()
    if len(head) != 2 or head[0] != name:
        raise MeshFormatError(f"Expected '{name} <count>' at line {pos + 1}")
    try:
        return int(head[1]), pos + 1
    except ValueError:
        raise MeshFormatError(f"Bad count in '{lines[pos]}'") from None


def load_mesh(path: Union[str, Path]) -> TriMesh:
    """Read a mesh written by ``save_mesh`` (or by hand in that format).

    Raises:
        MeshFormatError: On malformed content or invalid connectivity.
    """
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln.strip() for ln in raw if ln.strip() and not ln.startswith("#")]
    try:
        n_nodes, pos = _section(lines, 0, "nodes")
        ids: Dict[int, int] = {}
        coords = np.zeros((n_nodes, 2))
        for i in range(n_nodes):
            parts = lines[pos + i].split()
            ids[int(parts[0])] = i
            coords[i] = (float(parts[1]), float(parts[2]))
        n_cells, pos = _section(lines, pos + n_nodes, "cells")
        cells = np.array(
            [
                [ids[int(v)] for v in lines[pos + i].split()[1:4]]
                for i in range(n_cells)
            ],
            dtype=np.int64,
        )
        n_bnd, pos = _section(lines, pos + n_cells, "boundary")
        edges, tags = [], []
        for i in range(n_bnd):
            a, b, tag = lines[pos + i].split()[:3]
            edges.append((ids[int(a)], ids[int(b)]))
            tags.append(int(BoundaryTag.parse(tag)))
        pos += n_bnd
        periods = (0.0, 0.0)
        if pos < len(lines) and lines[pos].startswith("periods"):
            _, px, py = lines[pos].split()
            periods = (float(px), float(py))
    except (IndexError, KeyError, ValueError) as e:
        if isinstance(e, MeshFormatError):
            raise
        raise MeshFormatError(f"Malformed mesh file {path}: {e}") from e

    logger.info(f"📦 Loaded mesh {path}: {n_nodes} nodes, {n_cells} cells")
    return build_mesh(coords, cells, np.array(edges), np.array(tags), periods)
