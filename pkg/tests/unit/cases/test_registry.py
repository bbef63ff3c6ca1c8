from pathlib import Path

import numpy as np
import pytest

from src.aledg.cases.registry import CASE_DEFAULTS, CASES, init_case
from src.aledg.numerics.mesh import generate_structured_mesh, save_mesh
from src.aledg.numerics.physics import conserved_to_primitive
from src.aledg.utils.config import SimulationConfig


def test_registry_lists_every_case_with_defaults() -> None:
    # Assert
    expected = {
        "vortex",
        "explosion",
        "saltzman",
        "saltzman_viscous",
        "kidder",
        "sedov",
        "taylor_green",
    }
    assert set(CASES) == expected
    assert set(CASE_DEFAULTS) == expected


def test_init_case_unknown_name_raises() -> None:
    # Act / Assert
    with pytest.raises(ValueError, match="Unknown case 'shock_tube'"):
        init_case("shock_tube", SimulationConfig())


def test_init_case_projects_vortex_initial_data() -> None:
    # Arrange
    config = SimulationConfig(case="vortex", order=2, resolution=(4, 4))

    # Act
    mesh, solution, case = init_case("vortex", config)

    # Assert
    assert solution.time == 0.0
    assert solution.coeffs.shape == (mesh.n_cells, 6, 4)
    assert case.name == "vortex"
    assert np.all(np.isfinite(solution.coeffs))
    assert np.all(solution.coeffs[:, 0, 0] > 0.0)


def test_init_case_sedov_overrides_origin_cell() -> None:
    # Arrange
    config = SimulationConfig(case="sedov", resolution=(4, 4))

    # Act
    _, solution, case = init_case("sedov", config)

    # Assert
    origin = case.parameters["origin_cell"]
    np.testing.assert_allclose(
        solution.coeffs[origin, 0], case.cell_overrides[origin]
    )
    np.testing.assert_allclose(solution.coeffs[origin, 1:], 0.0)
    ambient = conserved_to_primitive(
        solution.coeffs[origin + 1, 0], case.model
    )
    assert ambient[3] == pytest.approx(1e-6)


def test_init_case_loads_mesh_file(tmp_path: Path) -> None:
    # Arrange
    path = tmp_path / "box.mesh"
    save_mesh(
        generate_structured_mesh(
            2, 2, extents=(0.0, 10.0, 0.0, 10.0), periodic=(True, True)
        ),
        path,
    )
    config = SimulationConfig(case="vortex", mesh=str(path))

    # Act
    mesh, solution, _ = init_case("vortex", config)

    # Assert
    assert mesh.n_cells == 8
    assert solution.coeffs.shape[0] == 8
