"""Decaying Taylor-Green vortex of the compressible Navier-Stokes equations."""

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

VISCOSITY = 0.1
DENSITY = 1.0
PERIOD = 2.0 * math.pi

DEFAULTS: Dict[str, Any] = {
    "final_time": "1.0",
    "resolution": "20,20",
    "mu": str(VISCOSITY),
}


def taylor_green_primitive(
    points: FloatArray, time: float, gamma: float, mu: float
) -> FloatArray:
    """Analytic ``(rho, u, v, p)`` with kinematic viscosity ``mu / rho``."""
    nu = mu / DENSITY
    x, y = points[..., 0], points[..., 1]
    decay = math.exp(-2.0 * nu * time)
    out = np.empty(points.shape[:-1] + (4,))
    out[..., 0] = DENSITY
    out[..., 1] = np.sin(x) * np.cos(y) * decay
    out[..., 2] = -np.cos(x) * np.sin(y) * decay
    out[..., 3] = 100.0 / gamma + 0.25 * (
        np.cos(2.0 * x) + np.cos(2.0 * y)
    ) * decay**2
    return out


def build(config: SimulationConfig) -> Tuple[TriMesh, CaseDefinition]:
    nx, ny = (config.resolution + (20, 20))[:2]
    mu = VISCOSITY if config.mu is None else config.mu
    model = GasModel(gamma=config.gamma or 1.4, mu=mu, prandtl=config.prandtl)
    mesh = generate_structured_mesh(
        nx,
        ny,
        extents=(0.0, PERIOD, 0.0, PERIOD),
        periodic=(True, True),
    )

    def primitive(points: FloatArray, time: float) -> FloatArray:
        return taylor_green_primitive(points, time, model.gamma, model.mu)

    exact = conserved_field(primitive, model)
    case = CaseDefinition(
        name="taylor_green",
        model=model,
        initial_state=at_time_zero(exact),
        exact_solution=exact,
        parameters={"mu": mu, "pressure_constant": 100.0 / model.gamma},
    )
    return mesh, case
