"""Isentropic vortex convected through a periodic box."""

import math
from typing import Any, Dict, Tuple

import numpy as np

from src.aledg.cases.base import (
    CaseDefinition,
    FloatArray,
    at_time_zero,
    conserved_field,
)
from src.aledg.numerics.mesh import TriMesh, generate_structured_mesh
from src.aledg.numerics.physics import GasModel
from src.aledg.utils.config import SimulationConfig

STRENGTH = 5.0
BOX = 10.0
BACKGROUND = (1.0, 1.0, 1.0, 1.0)
CONVERGENCE_RESOLUTIONS = (43, 57, 87, 110)

DEFAULTS: Dict[str, Any] = {
    "final_time": "0.1",
    "resolution": "20,20",
}


def vortex_primitive(
    points: FloatArray,
    time: float,
    gamma: float = 1.4,
    strength: float = STRENGTH,
    box: float = BOX,
) -> FloatArray:
    """Exact ``(rho, u, v, p)`` of the vortex translated by the background.

    The vortex centre starts at the middle of the box and the distance is
    taken to the nearest periodic image.
    """
    rho_inf, u_inf, v_inf, p_inf = BACKGROUND
    centre = np.array([0.5 * box + u_inf * time, 0.5 * box + v_inf * time])
    rel = points - centre
    rel -= box * np.round(rel / box)
    r2 = np.sum(rel**2, axis=-1)
    bump = np.exp(0.5 * (1.0 - r2))
    amp = strength / (2.0 * math.pi)
    d_temp = -(gamma - 1.0) * strength**2 / (8.0 * gamma * math.pi**2) * (
        bump**2
    )
    temp = 1.0 + d_temp
    rho = rho_inf * temp ** (1.0 / (gamma - 1.0))
    out = np.empty(points.shape[:-1] + (4,))
    out[..., 0] = rho
    out[..., 1] = u_inf - amp * bump * rel[..., 1]
    out[..., 2] = v_inf + amp * bump * rel[..., 0]
    out[..., 3] = p_inf * rho**gamma
    return out


def background_velocity(points: FloatArray, time: float) -> FloatArray:
    velocity = np.array(BACKGROUND[1:3])
    return np.broadcast_to(velocity, points.shape).copy()


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    """Periodic [0, 10]^2 box with the vortex in its centre."""
    nx, ny = (config.resolution + (20, 20))[:2]
    model = GasModel(gamma=config.gamma or 1.4, mu=config.mu or 0.0)
    mesh = generate_structured_mesh(
        nx, ny, extents=(0.0, BOX, 0.0, BOX), periodic=(True, True)
    )

    def primitive(points: FloatArray, time: float) -> FloatArray:
        return vortex_primitive(points, time, model.gamma)

    exact = conserved_field(primitive, model)
    case = CaseDefinition(
        name="vortex",
        model=model,
        initial_state=at_time_zero(exact),
        exact_solution=exact,
        mesh_velocity=background_velocity,
        parameters={"strength": STRENGTH, "box": BOX},
    )
    return mesh, case
