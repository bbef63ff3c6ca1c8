from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from src.aledg.cases.registry import CASE_DEFAULTS
from src.aledg.numerics.mesh_motion import RelaxationMode
from src.aledg.numerics.predictor import MotionMode
from src.aledg.utils.config import (
    DEFAULT_RESULTS_DB_URL,
    SimulationConfig,
    load_config,
    read_key_value_file,
)


def test_load_config_without_arguments_uses_defaults(
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    # Arrange
    monkeypatch.delenv("ALEDG_RESULTS_DB_URL", raising=False)

    # Act
    config = load_config([])

    # Assert
    assert config.case == "vortex"
    assert config.order == 1
    assert config.motion is MotionMode.LAGRANGIAN
    assert config.results_db_url == DEFAULT_RESULTS_DB_URL


def test_load_config_layers_defaults_file_env_and_flags(
    tmp_path: Path, env_vars: Callable[[Dict[str, str]], None]
) -> None:
    # Arrange
    path = tmp_path / "run.cfg"
    path.write_text(
        "# kidder run\n"
        "case = kidder\n"
        "order = 2\n"
        "cfl = 0.3  # smaller\n"
        "output-every = 5\n"
        "resolution = 4x40\n"
    )
    env_vars({"ALEDG_RESULTS_DB_URL": "sqlite:///env.db"})

    # Act
    config = load_config(
        ["--config", str(path), "--cfl", "0.25"], CASE_DEFAULTS
    )

    # Assert
    assert config.case == "kidder"
    assert config.order == 2
    assert config.cfl == 0.25
    assert config.output_every == 5
    assert config.resolution == (4, 40)
    assert config.gamma == 2.0
    assert config.relaxation is RelaxationMode.LAGRANGIAN
    assert config.results_db_url == "sqlite:///env.db"


def test_load_config_flags_select_motion_and_relaxation() -> None:
    # Act
    config = load_config(
        ["--motion", "eulerian", "--relax", "constant", "--omega", "0.4"]
    )

    # Assert
    assert config.motion is MotionMode.EULERIAN
    assert config.relaxation is RelaxationMode.CONSTANT
    assert config.relaxation_omega == 0.4


@pytest.mark.parametrize(  # type: ignore[misc]
    "overrides, message",
    [
        ({"order": 4}, "order must be"),
        ({"cfl": 0.6}, "cfl must lie"),
        ({"final_time": 0.0}, "final time must be positive"),
        ({"relaxation_omega": 1.5}, "relaxation omega"),
        ({"max_steps": 0}, "step bound"),
    ],
)
def test_validate_out_of_range_raises(
    overrides: Dict[str, Any], message: str
) -> None:
    # Arrange
    config = SimulationConfig().with_overrides(overrides)

    # Act / Assert
    with pytest.raises(ValueError, match=message):
        config.validate()


def test_with_overrides_coerces_strings_and_keeps_unknown_keys() -> None:
    # Act
    config = SimulationConfig().with_overrides(
        {
            "walls": "yes",
            "mu": "none",
            "gamma": "1.4",
            "seed": "7",
            "mesh": "",
            "resolutions": "10;20",
            "prandtl": None,
        }
    )

    # Assert
    assert config.walls is True
    assert config.mu is None
    assert config.gamma == 1.4
    assert config.seed == 7
    assert config.mesh is None
    assert config.prandtl == 0.75
    assert config.extra == {"resolutions": "10;20"}


def test_with_overrides_bad_boolean_raises() -> None:
    # Act / Assert
    with pytest.raises(ValueError, match="Not a boolean"):
        SimulationConfig().with_overrides({"persist": "maybe"})


def test_read_key_value_file_line_without_equals_raises(
    tmp_path: Path,
) -> None:
    # Arrange
    path = tmp_path / "bad.cfg"
    path.write_text("case = vortex\norder 2\n")

    # Act / Assert
    with pytest.raises(ValueError, match="bad.cfg:2"):
        read_key_value_file(path)
