"""Cylindrical explosion in a disc."""

from typing import Any, Dict, Tuple

import numpy as np

from src.aledg.cases.base import CaseDefinition, FloatArray
from src.aledg.numerics.mesh import BoundaryTag, TriMesh, generate_disc_mesh
from src.aledg.numerics.physics import GasModel, primitive_to_conserved
from src.aledg.utils.config import SimulationConfig

RADIUS = 1.0
SPLIT_RADIUS = 0.5
INNER = (1.0, 0.0, 0.0, 1.0)
OUTER = (0.125, 0.0, 0.0, 0.1)

DEFAULTS: Dict[str, Any] = {
    "final_time": "0.25",
    "resolution": "20",
}


def explosion_primitive(points: FloatArray) -> FloatArray:
    """Inner state for ``r <= 0.5``, outer state elsewhere."""
    r = np.linalg.norm(points, axis=-1)
    inside = (r <= SPLIT_RADIUS)[..., None]
    return np.where(inside, np.array(INNER), np.array(OUTER))


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    """Unit disc; transmissive rim, or slip walls when ``walls`` is set."""
    rings = (config.resolution + (20,))[0]
    tag = BoundaryTag.SLIP_WALL if config.walls else BoundaryTag.TRANSMISSIVE
    model = GasModel(gamma=config.gamma or 1.4, mu=config.mu or 0.0)
    mesh = generate_disc_mesh(RADIUS, rings, tag=tag, seed=config.seed)

    def initial(points: FloatArray) -> FloatArray:
        return primitive_to_conserved(explosion_primitive(points), model)

    case = CaseDefinition(
        name="explosion",
        model=model,
        initial_state=initial,
        parameters={"split_radius": SPLIT_RADIUS, "walls": config.walls},
    )
    return mesh, case
