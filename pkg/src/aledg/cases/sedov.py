"""Sedov point explosion in the first quadrant."""

from typing import Any, Dict, Tuple

import numpy as np

from src.aledg.cases.base import CaseDefinition, FloatArray, uniform_primitive
from src.aledg.numerics.mesh import (
    BoundaryTag,
    TriMesh,
    generate_structured_mesh,
)
from src.aledg.numerics.physics import GasModel, primitive_to_conserved
from src.aledg.utils.config import SimulationConfig

EXTENT = 1.2
TOTAL_ENERGY = 0.244816
# Quarter of the plane carries a quarter of the blast energy.
SYMMETRY_FACTOR = 4.0
AMBIENT = (1.0, 0.0, 0.0, 1e-6)

DEFAULTS: Dict[str, Any] = {
    "final_time": "1.0",
    "resolution": "30,30",
    "relaxation": "constant",
    "relaxation_omega": "0.7",
}


def origin_cell(mesh: TriMesh) -> int:
    """First cell that has a vertex at the origin.

    Raises:
        ValueError: If no cell touches the origin.
    """
    at_origin = np.all(np.abs(mesh.cell_vertices()) < 1e-12, axis=-1)
    cells = np.flatnonzero(at_origin.any(axis=1))
    if cells.size == 0:
        raise ValueError("No cell touches the origin")
    return int(cells[0])


def origin_pressure(gamma: float, volume: float, density: float) -> float:
    return (gamma - 1.0) * density * TOTAL_ENERGY / (
        SYMMETRY_FACTOR * volume
    )


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    """30x30 split box; the blast energy sits in the origin cell."""
    nx, ny = (config.resolution + (30, 30))[:2]
    model = GasModel(gamma=config.gamma or 1.4)
    mesh = generate_structured_mesh(
        nx,
        ny,
        extents=(0.0, EXTENT, 0.0, EXTENT),
        side_tags={
            side: BoundaryTag.SLIP_WALL
            for side in ("bottom", "right", "top", "left")
        },
    )
    cell = origin_cell(mesh)
    volume = float(mesh.cell_areas()[cell])
    p_origin = origin_pressure(model.gamma, volume, AMBIENT[0])
    blast = primitive_to_conserved(
        np.array([AMBIENT[0], 0.0, 0.0, p_origin]), model
    )

    def initial(points: FloatArray) -> FloatArray:
        return primitive_to_conserved(
            uniform_primitive(np.array(AMBIENT), points), model
        )

    case = CaseDefinition(
        name="sedov",
        model=model,
        initial_state=initial,
        cell_overrides={cell: blast},
        parameters={
            "total_energy": TOTAL_ENERGY,
            "origin_cell": cell,
            "origin_volume": volume,
            "origin_pressure": p_origin,
        },
    )
    return mesh, case
