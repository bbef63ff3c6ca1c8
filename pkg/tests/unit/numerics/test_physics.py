import math
from typing import Dict

import numpy as np
import pytest

from src.aledg.numerics.exceptions import InadmissibleStateError
from src.aledg.numerics.physics import (
    GasModel,
    admissible_mask,
    conserved_to_primitive,
    euler_flux,
    is_admissible,
    max_ale_wavespeed,
    max_viscous_eigenvalue,
    navier_stokes_flux,
    pressure,
    primitive_to_conserved,
    rotate,
    viscous_flux,
)


def test_primitive_to_conserved_known_state(gas: GasModel) -> None:
    # Arrange
    w = np.array([2.0, 1.0, -1.0, 0.4])

    # Act
    q = primitive_to_conserved(w, gas)

    # Assert
    np.testing.assert_allclose(q, [2.0, 2.0, -2.0, 1.0 + 2.0])
    np.testing.assert_allclose(conserved_to_primitive(q, gas), w)


def test_euler_flux_known_state(gas: GasModel) -> None:
    # Arrange
    q = primitive_to_conserved(np.array([1.0, 2.0, 0.0, 1.0]), gas)

    # Act
    flux = euler_flux(q, gas)

    # Assert
    np.testing.assert_allclose(flux[:, 0], [2.0, 5.0, 0.0, 2.0 * 5.5])
    np.testing.assert_allclose(flux[:, 1], [0.0, 0.0, 1.0, 0.0])


def test_euler_flux_is_rotationally_invariant(gas: GasModel) -> None:
    # Arrange
    q = primitive_to_conserved(np.array([1.3, 0.4, -0.7, 2.1]), gas)
    angle = 0.6
    normal = np.array([1.0, 0.0])
    rotated_normal = np.array([math.cos(angle), math.sin(angle)])

    # Act
    flux = euler_flux(q, gas) @ normal
    rotated_flux = euler_flux(rotate(q, angle), gas) @ rotated_normal

    # Assert
    np.testing.assert_allclose(rotated_flux, rotate(flux, angle))


def test_euler_flux_negative_density_raises(gas: GasModel) -> None:
    # Arrange
    q = np.array([-1.0, 0.0, 0.0, 1.0])

    # Act / Assert
    with pytest.raises(InadmissibleStateError):
        euler_flux(q, gas)


def test_euler_flux_non_strict_skips_check(gas: GasModel) -> None:
    # Arrange
    q = np.array([1.0, 0.0, 0.0, -1.0])

    # Act
    flux = euler_flux(q, gas, strict=False)

    # Assert
    assert flux[1, 0] == pytest.approx(-0.4)


def test_pressure_zero_density_raises(gas: GasModel) -> None:
    # Act / Assert
    with pytest.raises(InadmissibleStateError, match="density"):
        pressure(np.array([0.0, 0.0, 0.0, 1.0]), gas)


def test_admissible_mask_flags_bad_states(gas: GasModel) -> None:
    # Arrange
    q = np.array(
        [
            [1.0, 0.0, 0.0, 1.0],
            [1.0, 2.0, 0.0, 1.0],
            [np.nan, 0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, 1.0],
        ]
    )

    # Act
    mask = admissible_mask(q, gas)

    # Assert
    np.testing.assert_array_equal(mask, [True, False, False, False])
    assert not is_admissible(q, gas)


def test_max_ale_wavespeed_comoving_mesh_gives_sound_speed(
    gas: GasModel,
) -> None:
    # Arrange
    q = primitive_to_conserved(np.array([1.0, 3.0, 1.0, 1.0]), gas)

    # Act
    speed = max_ale_wavespeed(
        q, np.array([0.6, 0.8]), np.array([3.0, 1.0]), gas
    )

    # Assert
    assert speed == pytest.approx(math.sqrt(1.4))


def test_viscous_flux_vanishes_without_gradients() -> None:
    # Arrange
    model = GasModel(mu=0.1)
    q = primitive_to_conserved(np.array([1.0, 0.5, 0.2, 1.0]), model)

    # Act
    flux = viscous_flux(q, np.zeros((4, 2)), model)

    # Assert
    np.testing.assert_allclose(flux, 0.0)


def test_viscous_flux_simple_shear_stress() -> None:
    # Arrange
    model = GasModel(mu=0.1)
    q = np.array([1.0, 0.0, 0.0, 2.5])
    grad = np.zeros((4, 2))
    grad[1, 1] = 2.0

    # Act
    flux = viscous_flux(q, grad, model)

    # Assert
    assert flux[1, 1] == pytest.approx(0.2)
    assert flux[2, 0] == pytest.approx(0.2)
    assert flux[1, 0] == pytest.approx(0.0)


def test_navier_stokes_flux_inviscid_model_equals_euler(
    gas: GasModel,
) -> None:
    # Arrange
    q = primitive_to_conserved(np.array([1.0, 0.3, 0.1, 1.0]), gas)
    grad = np.ones((4, 2))

    # Act
    flux = navier_stokes_flux(q, grad, gas)

    # Assert
    np.testing.assert_allclose(flux, euler_flux(q, gas))


def test_max_viscous_eigenvalue_uses_larger_factor() -> None:
    # Arrange
    model = GasModel(gamma=1.4, mu=0.3, prandtl=0.75)
    q = np.array([2.0, 0.0, 0.0, 1.0])

    # Act
    lam = max_viscous_eigenvalue(q, model)

    # Assert
    assert lam == pytest.approx(1.4 / 0.75 * 0.3 / 2.0)


@pytest.mark.parametrize(  # type: ignore[misc]
    "kwargs", [{"gamma": 1.0}, {"mu": -0.1}, {"prandtl": 0.0}]
)
def test_gas_model_invalid_parameters_raise(kwargs: Dict[str, float]) -> None:
    # Act / Assert
    with pytest.raises(ValueError):
        GasModel(**kwargs)
