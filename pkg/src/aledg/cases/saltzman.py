"""Saltzman piston on a skewed box."""

import math
from typing import Any, Dict, Tuple

import numpy as np

from src.aledg.cases.base import CaseDefinition, FloatArray, uniform_primitive
from src.aledg.numerics.boundary import BoundaryConditions
from src.aledg.numerics.mesh import (
    BoundaryTag,
    TriMesh,
    generate_structured_mesh,
)
from src.aledg.numerics.physics import GasModel, primitive_to_conserved
from src.aledg.utils.config import SimulationConfig

LENGTH = 1.0
HEIGHT = 0.1
PISTON_VELOCITY = (1.0, 0.0)
STATE = (1.0, 0.0, 0.0, 1e-4)
POST_SHOCK_DENSITY = 4.0
SHOCK_SPEED = 4.0 / 3.0

DEFAULTS: Dict[str, Any] = {
    "final_time": "0.6",
    "resolution": "100,10",
    "gamma": "1.6666666666666667",
}
VISCOUS_DEFAULTS: Dict[str, Any] = {
    **DEFAULTS,
    "mu": "0.01",
    "cfl": "0.1",
}


def skew(nodes: FloatArray) -> FloatArray:
    """Return ``x' = x + (0.1 - y) sin(pi x)``; y is unchanged."""
    out = np.array(nodes, dtype=float, copy=True)
    out[:, 0] += (HEIGHT - nodes[:, 1]) * np.sin(math.pi * nodes[:, 0])
    return out


def saltzman_primitive(points: FloatArray, time: float) -> FloatArray:
    """Infinite strength shock driven by the piston.

    The piston sits at ``x = t`` and the shock at ``x = 4 t / 3``.
    """
    out = uniform_primitive(np.array(STATE), points)
    x = points[:, 0]
    shocked = (x >= time) & (x <= SHOCK_SPEED * time)
    out[shocked] = (POST_SHOCK_DENSITY, PISTON_VELOCITY[0], 0.0, 4.0 / 3.0)
    return out


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    """100x10 skewed box, moving wall on the left, slip walls elsewhere."""
    nx, ny = (config.resolution + (100, 10))[:2]
    model = GasModel(
        gamma=config.gamma or 5.0 / 3.0,
        mu=config.mu or 0.0,
        prandtl=config.prandtl,
    )
    mesh = generate_structured_mesh(
        nx,
        ny,
        extents=(0.0, LENGTH, 0.0, HEIGHT),
        side_tags={
            "left": BoundaryTag.MOVING_WALL,
            "right": BoundaryTag.SLIP_WALL,
            "bottom": BoundaryTag.SLIP_WALL,
            "top": BoundaryTag.SLIP_WALL,
        },
        transform=skew,
    )

    def initial(points: FloatArray) -> FloatArray:
        return primitive_to_conserved(
            uniform_primitive(np.array(STATE), points), model
        )

    def exact(points: FloatArray, time: float) -> FloatArray:
        return primitive_to_conserved(saltzman_primitive(points, time), model)

    case = CaseDefinition(
        name="saltzman_viscous" if model.mu > 0.0 else "saltzman",
        model=model,
        initial_state=initial,
        conditions=BoundaryConditions(wall_velocity=PISTON_VELOCITY),
        exact_solution=exact,
        parameters={"mu": model.mu, "post_shock_density": 4.0},
    )
    return mesh, case
