import math
from typing import Optional

import numpy as np
import pytest

from src.aledg.cases import (
    explosion,
    kidder,
    saltzman,
    sedov,
    taylor_green,
    vortex,
)
from src.aledg.numerics.mesh import BoundaryTag, generate_structured_mesh
from src.aledg.numerics.physics import conserved_to_primitive
from src.aledg.utils.config import SimulationConfig


def test_vortex_primitive_centre_matches_closed_form() -> None:
    # Arrange
    centre = np.array([[5.0, 5.0]])
    temp = 1.0 - 0.4 * 25.0 / (8.0 * 1.4 * math.pi**2) * math.e

    # Act
    w = vortex.vortex_primitive(centre, 0.0)

    # Assert
    assert w[0, 0] == pytest.approx(temp**2.5)
    assert w[0, 1:3] == pytest.approx([1.0, 1.0])
    assert w[0, 3] == pytest.approx(w[0, 0] ** 1.4)


def test_vortex_primitive_is_translated_by_background() -> None:
    # Arrange
    points = np.array([[4.0, 5.5], [6.2, 3.1], [9.9, 0.2]])

    # Act
    later = vortex.vortex_primitive(points + 1.0, 1.0)
    earlier = vortex.vortex_primitive(points, 0.0)

    # Assert
    np.testing.assert_allclose(later, earlier, rtol=1e-12)


def test_vortex_build_returns_periodic_box_with_exact_solution() -> None:
    # Arrange
    config = SimulationConfig(case="vortex", resolution=(4, 4))

    # Act
    mesh, case = vortex.build(config)

    # Assert
    assert mesh.n_cells == 32
    assert mesh.periods == (10.0, 10.0)
    assert case.exact_solution is not None
    assert case.mesh_velocity is not None
    points = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(case.mesh_velocity(points, 0.5), 1.0)
    np.testing.assert_allclose(
        case.initial_state(points), case.exact_solution(points, 0.0)
    )


def test_explosion_primitive_splits_at_half_radius() -> None:
    # Arrange
    points = np.array([[0.3, 0.0], [0.0, -0.7]])

    # Act
    w = explosion.explosion_primitive(points)

    # Assert
    np.testing.assert_allclose(w, [explosion.INNER, explosion.OUTER])


@pytest.mark.parametrize(  # type: ignore[misc]
    "walls, tag",
    [(False, BoundaryTag.TRANSMISSIVE), (True, BoundaryTag.SLIP_WALL)],
)
def test_explosion_build_tags_disc_rim(walls: bool, tag: BoundaryTag) -> None:
    # Arrange
    config = SimulationConfig(case="explosion", resolution=(4,), walls=walls)

    # Act
    mesh, case = explosion.build(config)

    # Assert
    assert np.all(mesh.boundary_edge_tags == tag)
    assert np.all(mesh.cell_areas() > 0.0)
    assert np.linalg.norm(mesh.nodes, axis=1).max() == pytest.approx(1.0)
    assert case.exact_solution is None


def test_saltzman_skew_moves_bottom_and_keeps_top() -> None:
    # Arrange
    nodes = np.array([[0.5, 0.0], [0.5, 0.1], [0.0, 0.05]])

    # Act
    skewed = saltzman.skew(nodes)

    # Assert
    np.testing.assert_allclose(skewed[:, 0], [0.6, 0.5, 0.0])
    np.testing.assert_allclose(skewed[:, 1], nodes[:, 1])


def test_saltzman_primitive_has_shocked_slab() -> None:
    # Arrange
    points = np.array([[0.35, 0.05], [0.5, 0.05]])

    # Act
    w = saltzman.saltzman_primitive(points, 0.3)

    # Assert
    np.testing.assert_allclose(w[0], [4.0, 1.0, 0.0, 4.0 / 3.0])
    np.testing.assert_allclose(w[1], saltzman.STATE)


@pytest.mark.parametrize(  # type: ignore[misc]
    "mu, name", [(None, "saltzman"), (0.01, "saltzman_viscous")]
)
def test_saltzman_build_piston_on_left(
    mu: Optional[float], name: str
) -> None:
    # Arrange
    config = SimulationConfig(case=name, resolution=(10, 2), mu=mu)

    # Act
    mesh, case = saltzman.build(config)

    # Assert
    assert mesh.n_cells == 40
    assert case.name == name
    assert case.conditions.wall_velocity == saltzman.PISTON_VELOCITY
    assert case.model.gamma == pytest.approx(5.0 / 3.0)
    assert np.count_nonzero(
        mesh.boundary_edge_tags == BoundaryTag.MOVING_WALL
    ) == 2


def test_kidder_shell_radii_halve_at_final_time() -> None:
    # Act
    inner, outer = kidder.shell_radii(kidder.FINAL_TIME)

    # Assert
    assert inner == pytest.approx(0.45)
    assert outer == pytest.approx(0.5)
    assert kidder.compression(0.0) == (1.0, 0.0)


def test_kidder_primitive_is_self_similar() -> None:
    # Arrange
    start = np.array([[0.9, 0.0], [0.0, 1.0]])

    # Act
    initial = kidder.kidder_primitive(start, 0.0)
    final = kidder.kidder_primitive(0.5 * start, kidder.FINAL_TIME)

    # Assert
    np.testing.assert_allclose(initial[:, 0], [1.0, 2.0])
    np.testing.assert_allclose(initial[:, 1:3], 0.0)
    np.testing.assert_allclose(final[:, 0], [4.0, 8.0], rtol=1e-9)
    np.testing.assert_allclose(final[:, 3], final[:, 0] ** 2, rtol=1e-12)
    assert np.all(final[:, 1:3] @ np.array([1.0, 1.0]) < 0.0)


def test_kidder_build_rejects_time_past_focusing() -> None:
    # Arrange
    config = SimulationConfig(case="kidder", final_time=0.3)

    # Act / Assert
    with pytest.raises(ValueError, match="focusing time"):
        kidder.build(config)


def test_kidder_build_uses_exact_arcs() -> None:
    # Arrange
    config = SimulationConfig(case="kidder", resolution=(2, 6))

    # Act
    mesh, case = kidder.build(config)

    # Assert
    assert mesh.n_cells == 24
    assert case.conditions.exact_state is case.exact_solution
    dirichlet = mesh.boundary_edge_tags == BoundaryTag.EXACT_DIRICHLET
    assert np.count_nonzero(dirichlet) == 12
    assert mesh.arc_tags == (BoundaryTag.EXACT_DIRICHLET,)


def test_sedov_build_puts_blast_into_origin_cell() -> None:
    # Arrange
    config = SimulationConfig(case="sedov", resolution=(4, 4))
    volume = 0.5 * (1.2 / 4.0) ** 2

    # Act
    mesh, case = sedov.build(config)

    # Assert
    assert sedov.origin_cell(mesh) == 0
    assert list(case.cell_overrides) == [0]
    blast = conserved_to_primitive(case.cell_overrides[0], case.model)
    expected = 0.4 * sedov.TOTAL_ENERGY / (4.0 * volume)
    assert blast[3] == pytest.approx(expected)
    assert case.parameters["origin_volume"] == pytest.approx(volume)


def test_sedov_origin_cell_missing_raises() -> None:
    # Arrange
    mesh = generate_structured_mesh(2, 2, extents=(1.0, 2.0, 1.0, 2.0))

    # Act / Assert
    with pytest.raises(ValueError, match="origin"):
        sedov.origin_cell(mesh)


def test_taylor_green_primitive_decays_with_viscosity() -> None:
    # Arrange
    point = np.array([[0.5 * math.pi, 0.0]])

    # Act
    start = taylor_green.taylor_green_primitive(point, 0.0, 1.4, 0.1)
    later = taylor_green.taylor_green_primitive(point, 1.0, 1.4, 0.1)

    # Assert
    np.testing.assert_allclose(start[0], [1.0, 1.0, 0.0, 100.0 / 1.4])
    assert later[0, 1] == pytest.approx(math.exp(-0.2))


def test_taylor_green_build_defaults_to_viscous_model() -> None:
    # Arrange
    config = SimulationConfig(case="taylor_green", resolution=(3, 3))

    # Act
    mesh, case = taylor_green.build(config)

    # Assert
    assert case.model.mu == pytest.approx(0.1)
    assert mesh.periods == pytest.approx((2.0 * math.pi, 2.0 * math.pi))
