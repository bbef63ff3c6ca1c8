import numpy as np
import pytest
from numpy.typing import NDArray

from src.aledg.cases.radial_reference import (
    RadialProfile,
    solve_radial_explosion,
)


def _volumes(n_cells: int) -> NDArray[np.float64]:
    faces = np.linspace(0.0, 1.0, n_cells + 1)
    return 0.5 * (faces[1:] ** 2 - faces[:-1] ** 2)


def test_radial_profile_sample_interpolates_linearly() -> None:
    # Arrange
    profile = RadialProfile(
        radius=np.array([0.0, 1.0]),
        density=np.array([1.0, 3.0]),
        velocity=np.array([0.0, 1.0]),
        pressure=np.array([2.0, 2.0]),
        time=0.1,
    )

    # Act
    values = profile.sample(np.array([0.25, 0.5]))

    # Assert
    np.testing.assert_allclose(values, [[1.5, 0.25, 2.0], [2.0, 0.5, 2.0]])


def test_solve_radial_explosion_reaches_final_time() -> None:
    # Act
    profile = solve_radial_explosion(n_cells=100, final_time=0.05)

    # Assert
    assert profile.time == pytest.approx(0.05)
    assert profile.radius.shape == (100,)
    assert np.all(profile.density > 0.0)
    assert np.all(profile.pressure > 0.0)
    assert profile.sample(np.array([0.5]))[0, 1] > 0.0


@pytest.mark.parametrize("walls", [False, True])  # type: ignore[misc]
def test_solve_radial_explosion_conserves_mass(walls: bool) -> None:
    # Arrange
    n_cells = 100
    volumes = _volumes(n_cells)
    centres = np.linspace(0.005, 0.995, n_cells)
    initial = np.where(centres <= 0.5, 1.0, 0.125)

    # Act
    profile = solve_radial_explosion(
        n_cells=n_cells, final_time=0.05, walls=walls
    )

    # Assert
    assert volumes @ profile.density == pytest.approx(
        volumes @ initial, rel=1e-12
    )


def test_solve_radial_explosion_first_order_is_smoother() -> None:
    # Act
    second = solve_radial_explosion(n_cells=100, final_time=0.05)
    first = solve_radial_explosion(
        n_cells=100, final_time=0.05, second_order=False
    )

    # Assert
    jump = np.abs(np.diff(second.density)).max()
    assert np.abs(np.diff(first.density)).max() < jump


@pytest.mark.parametrize(  # type: ignore[misc]
    "n_cells, final_time", [(1, 0.1), (10, 0.0)]
)
def test_solve_radial_explosion_invalid_input_raises(
    n_cells: int, final_time: float
) -> None:
    # Act / Assert
    with pytest.raises(ValueError, match="at least two cells"):
        solve_radial_explosion(n_cells=n_cells, final_time=final_time)
