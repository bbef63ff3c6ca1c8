"""Kidder's self-similar compression of a gas shell.

The closed form holds for ``gamma = 2`` with isentropic initial data
``p = s0 rho^gamma``; the shell collapses as ``R = h(t) r`` with
``h(t) = sqrt(1 - t^2 / tau^2)``.
"""

import math
from typing import Any, Dict, Tuple

import numpy as np

from src.aledg.cases.base import (
    CaseDefinition,
    FloatArray,
    at_time_zero,
    conserved_field,
)
from src.aledg.numerics.boundary import BoundaryConditions
from src.aledg.numerics.mesh import (
    BoundaryTag,
    TriMesh,
    generate_annulus_sector_mesh,
)
from src.aledg.numerics.physics import GasModel
from src.aledg.utils.config import SimulationConfig

GAMMA = 2.0
ENTROPY = 1.0
INNER_RADIUS = 0.9
OUTER_RADIUS = 1.0
INNER_DENSITY = 1.0
OUTER_DENSITY = 2.0
FOCUSING_TIME = 0.217944947177
FINAL_TIME = 0.5 * math.sqrt(3.0) * FOCUSING_TIME

DEFAULTS: Dict[str, Any] = {
    "final_time": repr(FINAL_TIME),
    "resolution": "3,30",
    "gamma": "2.0",
    "relaxation": "lagrangian",
}


def compression(time: float) -> Tuple[float, float]:
    """Return ``h(t)`` and its time derivative."""
    h = math.sqrt(1.0 - (time / FOCUSING_TIME) ** 2)
    return h, -time / (FOCUSING_TIME**2 * h)


def initial_density(
    radius: FloatArray, gamma: float = GAMMA
) -> FloatArray:
    """Density profile of the shell at t = 0."""
    span = OUTER_RADIUS**2 - INNER_RADIUS**2
    r2 = radius**2
    base = (OUTER_RADIUS**2 - r2) / span * INNER_DENSITY ** (gamma - 1.0)
    base += (r2 - INNER_RADIUS**2) / span * OUTER_DENSITY ** (gamma - 1.0)
    return np.maximum(base, 1e-12) ** (1.0 / (gamma - 1.0))


def kidder_primitive(
    points: FloatArray, time: float, gamma: float = GAMMA
) -> FloatArray:
    h, dh = compression(time)
    radius = np.linalg.norm(points, axis=-1)
    rho = h ** (-2.0 / (gamma - 1.0)) * initial_density(radius / h, gamma)
    out = np.empty(points.shape[:-1] + (4,))
    out[..., 0] = rho
    out[..., 1:3] = (dh / h) * points
    out[..., 3] = ENTROPY * rho**gamma
    return out


def shell_radii(time: float) -> Tuple[float, float]:
    """Exact inner and outer radius at ``time``."""
    h, _ = compression(time)
    return h * INNER_RADIUS, h * OUTER_RADIUS


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    """Quarter shell, exact states on both arcs and slip walls on the axes."""
    n_radial, n_angular = (config.resolution + (3, 30))[:2]
    if config.final_time >= FOCUSING_TIME:
        raise ValueError("final time must precede the focusing time")
    model = GasModel(gamma=config.gamma or GAMMA)
    mesh = generate_annulus_sector_mesh(
        n_radial,
        n_angular,
        INNER_RADIUS,
        OUTER_RADIUS,
        arc_tag=BoundaryTag.EXACT_DIRICHLET,
        side_tag=BoundaryTag.SLIP_WALL,
    )

    def primitive(points: FloatArray, time: float) -> FloatArray:
        return kidder_primitive(points, time, model.gamma)

    exact = conserved_field(primitive, model)
    case = CaseDefinition(
        name="kidder",
        model=model,
        initial_state=at_time_zero(exact),
        conditions=BoundaryConditions(exact_state=exact),
        exact_solution=exact,
        parameters={
            "tau": FOCUSING_TIME,
            "entropy": ENTROPY,
            "final_radii": shell_radii(FINAL_TIME),
        },
    )
    return mesh, case
