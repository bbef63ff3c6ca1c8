import numpy as np
import pytest

from src.aledg.numerics.basis import (
    build_basis,
    build_projection_operators,
    build_spacetime_basis,
    interval_quadrature,
    n_dof,
    project_to_subcells,
    reconstruct_from_subcells,
    triangle_quadrature,
)
from src.aledg.numerics.subgrid import build_subgrid


@pytest.mark.parametrize("degree", [0, 1, 2, 3])  # type: ignore[misc]
def test_build_basis_mass_matrix_is_half_identity(degree: int) -> None:
    # Arrange
    basis = build_basis(degree)

    # Act
    mass = basis.mass_matrix()

    # Assert
    assert basis.n_dof == n_dof(degree)
    np.testing.assert_allclose(mass, 0.5 * np.eye(basis.n_dof), atol=1e-12)


def test_build_basis_constant_mode_is_one() -> None:
    # Arrange
    basis = build_basis(2)
    points = np.array([[0.1, 0.2], [0.7, 0.1], [0.0, 0.0]])

    # Act
    values = basis.evaluate(points)

    # Assert
    np.testing.assert_allclose(values[:, 0], 1.0)


def test_build_basis_gradient_matches_finite_differences() -> None:
    # Arrange
    basis = build_basis(3)
    point = np.array([[0.2, 0.3]])
    h = 1e-6

    # Act
    grad = basis.gradient(point)[0]
    fd_x = (
        basis.evaluate(point + [h, 0.0]) - basis.evaluate(point - [h, 0.0])
    )[0] / (2 * h)
    fd_y = (
        basis.evaluate(point + [0.0, h]) - basis.evaluate(point - [0.0, h])
    )[0] / (2 * h)

    # Assert
    np.testing.assert_allclose(grad[:, 0], fd_x, atol=1e-6)
    np.testing.assert_allclose(grad[:, 1], fd_y, atol=1e-6)


def test_build_basis_unsupported_degree_raises() -> None:
    # Act / Assert
    with pytest.raises(ValueError, match="Unsupported polynomial degree"):
        build_basis(4)


def test_triangle_quadrature_integrates_monomial_exactly() -> None:
    # Arrange
    rule = triangle_quadrature(4)
    x, y = rule.points[:, 0], rule.points[:, 1]

    # Act
    area = rule.weights.sum()
    integral = rule.weights @ (x * y)

    # Assert
    assert area == pytest.approx(0.5)
    assert integral == pytest.approx(1.0 / 24.0)


def test_interval_quadrature_integrates_cubic_on_unit_interval() -> None:
    # Arrange
    rule = interval_quadrature(2)

    # Act
    integral = rule.weights @ rule.points**3

    # Assert
    assert integral == pytest.approx(0.25)


@pytest.mark.parametrize("degree", [1, 2, 3])  # type: ignore[misc]
def test_build_spacetime_basis_is_nodal(degree: int) -> None:
    # Arrange
    basis = build_spacetime_basis(degree)

    # Act
    values = basis.evaluate(basis.nodes)

    # Assert
    assert basis.n_dof == n_dof(degree, dims=3)
    np.testing.assert_allclose(values, np.eye(basis.n_dof), atol=1e-10)


def test_build_spacetime_basis_partition_of_unity_has_zero_gradient() -> None:
    # Arrange
    basis = build_spacetime_basis(2)
    points = np.array([[0.2, 0.1, 0.3], [0.5, 0.4, 0.9]])

    # Act
    values = basis.evaluate(points)
    grads = basis.gradient(points)

    # Assert
    np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(grads.sum(axis=1), 0.0, atol=1e-9)


@pytest.mark.parametrize("degree", [1, 2, 3])  # type: ignore[misc]
def test_reconstruct_from_subcells_inverts_projection(degree: int) -> None:
    # Arrange
    basis = build_basis(degree)
    ops = build_projection_operators(basis, build_subgrid(degree))
    rng = np.random.default_rng(7)
    coeffs = rng.normal(size=(2, basis.n_dof, 4))
    areas = np.tile(ops.reference_areas, (2, 1))

    # Act
    averages = project_to_subcells(coeffs, ops)
    plain = reconstruct_from_subcells(averages, ops)
    weighted = reconstruct_from_subcells(averages, ops, areas=areas)

    # Assert
    np.testing.assert_allclose(plain, coeffs, atol=1e-10)
    np.testing.assert_allclose(weighted, coeffs, atol=1e-10)


def test_reconstruct_from_subcells_conserves_cell_integral() -> None:
    # Arrange
    basis = build_basis(2)
    ops = build_projection_operators(basis, build_subgrid(2))
    rng = np.random.default_rng(3)
    averages = rng.uniform(1.0, 2.0, size=(ops.reference_areas.size, 4))

    # Act
    coeffs = reconstruct_from_subcells(averages, ops)

    # Assert
    np.testing.assert_allclose(
        0.5 * coeffs[0], ops.reference_areas @ averages, atol=1e-12
    )
