import numpy as np
import pytest

from src.aledg.numerics.exceptions import TangledMeshError
from src.aledg.numerics.mesh import (
    BoundaryTag,
    TriMesh,
    generate_annulus_sector_mesh,
)
from src.aledg.numerics.subgrid import SubnodeKind, build_subgrid
from src.aledg.numerics.topology import (
    MeshSnapshots,
    build_topology,
    cell_subnode_positions,
    initial_positions,
    reference_positions,
    subcell_areas,
    voronoi_neighborhoods,
)


def test_build_topology_counts_shared_subnodes_once(
    wall_mesh: TriMesh,
) -> None:
    # Arrange
    sub = build_subgrid(1)

    # Act
    topology = build_topology(wall_mesh, sub)

    # Assert
    assert topology.n_faces == 33
    assert topology.n_nodes == 16 + 33 * 2 + 18 * 1
    assert np.count_nonzero(topology.face_tags == BoundaryTag.SLIP_WALL) == 12


def test_build_topology_periodic_identifies_opposite_sides(
    periodic_mesh: TriMesh,
) -> None:
    # Act
    topology = build_topology(periodic_mesh, build_subgrid(1))

    # Assert
    assert topology.n_faces == 48
    assert topology.n_nodes == 16 + 48 * 2 + 32
    assert topology.boundary_nodes.size == 0


def test_initial_positions_reproduce_cell_frames(
    periodic_mesh: TriMesh,
) -> None:
    # Arrange
    sub = build_subgrid(2)
    topology = build_topology(periodic_mesh, sub)

    # Act
    positions = initial_positions(periodic_mesh, topology)
    cell_pos = cell_subnode_positions(topology, positions)

    # Assert
    np.testing.assert_allclose(
        cell_pos, reference_positions(periodic_mesh, sub), atol=1e-14
    )


def test_initial_positions_place_arc_subnodes_on_circles() -> None:
    # Arrange
    mesh = generate_annulus_sector_mesh(2, 6, 0.9, 1.0)
    sub = build_subgrid(2)
    topology = build_topology(mesh, sub)
    faces = topology.faces[topology.face_tags == BoundaryTag.EXACT_DIRICHLET]
    arc_nodes = topology.l2g[faces[:, [0]], sub.edge_nodes[faces[:, 1]]]
    chord = np.zeros((topology.n_nodes, 2))
    chord[topology.l2g] = reference_positions(mesh, sub)

    # Act
    positions = initial_positions(mesh, topology)

    # Assert
    radius = np.linalg.norm(positions[arc_nodes], axis=-1)
    expected = np.where(radius < 0.95, 0.9, 1.0)
    np.testing.assert_allclose(radius, expected, rtol=1e-14)
    assert np.linalg.norm(chord[arc_nodes], axis=-1).min() < 0.9 - 1e-4
    assert np.all(subcell_areas(topology, positions) > 0.0)


def test_subcell_areas_sum_to_cell_areas(wall_mesh: TriMesh) -> None:
    # Arrange
    topology = build_topology(wall_mesh, build_subgrid(2))
    positions = initial_positions(wall_mesh, topology)

    # Act
    areas = subcell_areas(topology, positions)

    # Assert
    assert np.all(areas > 0.0)
    np.testing.assert_allclose(areas.sum(axis=1), wall_mesh.cell_areas())


def test_build_topology_colors_never_share_a_subcell(
    wall_mesh: TriMesh,
) -> None:
    # Arrange
    sub = build_subgrid(2)
    topology = build_topology(wall_mesh, sub)
    ptr = topology.patch_ptr

    # Act
    colored = np.concatenate(topology.colors)

    # Assert
    assert not set(colored.tolist()) & set(topology.boundary_nodes.tolist())
    for nodes in topology.colors:
        seen = set()
        for g in nodes:
            for i in range(ptr[g], ptr[g + 1]):
                key = (topology.patch_cells[i], topology.patch_subcells[i])
                assert key not in seen
                seen.add(key)


def test_voronoi_neighborhoods_match_lattice_valence(
    periodic_mesh: TriMesh,
) -> None:
    # Arrange
    topology = build_topology(periodic_mesh, build_subgrid(1))

    # Act
    cells, subcells = voronoi_neighborhoods(topology)

    # Assert
    for g in range(topology.n_nodes):
        kind = topology.kinds[g]
        if kind == SubnodeKind.VERTEX:
            assert cells[g].size == 6
        elif kind == SubnodeKind.FACE:
            assert cells[g].size == 2
        else:
            assert cells[g].size == 1
        assert subcells[g].size == 6


def test_cell_neighborhood_contains_cell_and_vertex_neighbors(
    periodic_mesh: TriMesh,
) -> None:
    # Arrange
    topology = build_topology(periodic_mesh, build_subgrid(1))

    # Act
    neighborhood = topology.cell_neighborhood(0)

    # Assert
    assert 0 in neighborhood
    assert neighborhood.size == 13


def test_mesh_snapshots_interpolates_linearly(wall_mesh: TriMesh) -> None:
    # Arrange
    topology = build_topology(wall_mesh, build_subgrid(1))
    old = initial_positions(wall_mesh, topology)
    snapshots = MeshSnapshots(old=old, new=old + 0.1, dt=0.5)

    # Act
    middle = snapshots.at(0.5)

    # Assert
    np.testing.assert_allclose(middle, old + 0.05)
    snapshots.validate(topology)


def test_mesh_snapshots_validate_mirrored_mesh_raises(
    wall_mesh: TriMesh,
) -> None:
    # Arrange
    topology = build_topology(wall_mesh, build_subgrid(1))
    old = initial_positions(wall_mesh, topology)
    mirrored = old * np.array([-1.0, 1.0])
    snapshots = MeshSnapshots(old=old, new=mirrored, dt=0.1)

    # Act / Assert
    with pytest.raises(TangledMeshError, match="t\\^n\\+1"):
        snapshots.validate(topology)
