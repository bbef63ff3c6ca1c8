import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict

import pytest
from _pytest.monkeypatch import MonkeyPatch

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.aledg.numerics.mesh import (  # noqa: E402
    BoundaryTag,
    TriMesh,
    generate_structured_mesh,
)
from src.aledg.numerics.physics import GasModel  # noqa: E402


@pytest.fixture(scope="session", autouse=True)  # type: ignore[misc]
def configure_logging() -> None:
    """Configure root logging for tests if not already set up.

    Side effects:
        Ensures DEBUG level logging is configured once for the session.
    """
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=logging.DEBUG)


@pytest.fixture  # type: ignore[misc]
def gas() -> GasModel:
    return GasModel(gamma=1.4)


@pytest.fixture  # type: ignore[misc]
def periodic_mesh() -> TriMesh:
    """Periodic 4x4 box on [0, 1]^2 with 32 cells."""
    return generate_structured_mesh(4, 4, periodic=(True, True))


@pytest.fixture  # type: ignore[misc]
def wall_mesh() -> TriMesh:
    """3x3 box on [0, 1]^2 closed by slip walls."""
    return generate_structured_mesh(
        3,
        3,
        side_tags={
            "bottom": BoundaryTag.SLIP_WALL,
            "right": BoundaryTag.SLIP_WALL,
            "top": BoundaryTag.SLIP_WALL,
            "left": BoundaryTag.SLIP_WALL,
        },
    )


@pytest.fixture  # type: ignore[misc]
def results_db_url(tmp_path: Path) -> str:
    """SQLite URL of a throwaway results database."""
    return f"sqlite:///{tmp_path / 'results.db'}"


@pytest.fixture  # type: ignore[misc]
def env_vars(monkeypatch: MonkeyPatch) -> Callable[[Dict[str, str]], None]:
    """Set environment variables for the duration of one test.

    Returns:
        Callable[[Dict[str, str]], None]: Setter applying the mapping.
    """

    def _set(values: Dict[str, str]) -> None:
        for key, value in values.items():
            monkeypatch.setenv(key, value)

    return _set
