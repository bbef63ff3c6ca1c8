"""One-dimensional cylindrical reference for the explosion problem.

Finite volumes on ``0 <= r <= R`` in the area-weighted form

    V_i dU_i/dt = -(r F)_{i+1/2} + (r F)_{i-1/2} + S_i,

with the pressure source ``S_i = (0, p_i (r_{i+1/2} - r_{i-1/2}), 0)``,
a Rusanov flux, optional minmod MUSCL reconstruction of the primitive
variables and two-stage SSP Runge-Kutta time stepping.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.aledg.cases.base import FloatArray
from src.aledg.cases.explosion import INNER, OUTER, RADIUS, SPLIT_RADIUS
from src.aledg.numerics.exceptions import InadmissibleStateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RadialProfile:
    """Cell-centred profiles of a radial solution at ``time``."""

    radius: FloatArray
    density: FloatArray
    velocity: FloatArray
    pressure: FloatArray
    time: float

    def sample(self, radius: FloatArray) -> FloatArray:
        """Linear interpolation of ``(rho, u, p)`` at radii, (n, 3)."""
        return np.column_stack(
            [
                np.interp(radius, self.radius, values)
                for values in (self.density, self.velocity, self.pressure)
            ]
        )


def _to_primitive(u: FloatArray, gamma: float) -> FloatArray:
    rho = u[:, 0]
    vel = u[:, 1] / rho
    p = (gamma - 1.0) * (u[:, 2] - 0.5 * rho * vel**2)
    return np.column_stack([rho, vel, p])


def _to_conserved(w: FloatArray, gamma: float) -> FloatArray:
    rho, vel, p = w[:, 0], w[:, 1], w[:, 2]
    return np.column_stack(
        [rho, rho * vel, p / (gamma - 1.0) + 0.5 * rho * vel**2]
    )


def _flux(w: FloatArray, gamma: float) -> FloatArray:
    rho, vel, p = w[:, 0], w[:, 1], w[:, 2]
    energy = p / (gamma - 1.0) + 0.5 * rho * vel**2
    return np.column_stack(
        [rho * vel, rho * vel**2 + p, vel * (energy + p)]
    )


def _minmod(a: FloatArray, b: FloatArray) -> FloatArray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(abs(a), abs(b)), 0.0)


def _with_ghosts(w: FloatArray, walls: bool) -> FloatArray:
    inner = w[:1] * np.array([1.0, -1.0, 1.0])
    outer = w[-1:] * (np.array([1.0, -1.0, 1.0]) if walls else 1.0)
    return np.vstack([inner, w, outer])


def _residual(
    u: FloatArray,
    faces: FloatArray,
    volumes: FloatArray,
    gamma: float,
    second_order: bool,
    walls: bool,
) -> FloatArray:
    w = _with_ghosts(_to_primitive(u, gamma), walls)
    if second_order:
        slopes = np.zeros_like(w)
        slopes[1:-1] = _minmod(w[1:-1] - w[:-2], w[2:] - w[1:-1])
    else:
        slopes = np.zeros_like(w)
    left = w[:-1] + 0.5 * slopes[:-1]
    right = w[1:] - 0.5 * slopes[1:]
    c_l = np.sqrt(gamma * left[:, 2] / left[:, 0])
    c_r = np.sqrt(gamma * right[:, 2] / right[:, 0])
    speed = np.maximum(abs(left[:, 1]) + c_l, abs(right[:, 1]) + c_r)
    flux = 0.5 * (_flux(left, gamma) + _flux(right, gamma))
    flux -= 0.5 * speed[:, None] * (
        _to_conserved(right, gamma) - _to_conserved(left, gamma)
    )
    weighted = faces[:, None] * flux
    rhs = -(weighted[1:] - weighted[:-1])
    rhs[:, 1] += _to_primitive(u, gamma)[:, 2] * np.diff(faces)
    return rhs / volumes[:, None]


def solve_radial_explosion(
    n_cells: int = 2000,
    final_time: float = 0.25,
    gamma: float = 1.4,
    cfl: float = 0.4,
    second_order: bool = True,
    walls: bool = False,
) -> RadialProfile:
    """Run the cylindrical explosion to ``final_time``.

    Args:
        n_cells (int): Radial cells on ``[0, R]``.
        final_time (float): End time.
        gamma (float): Adiabatic index.
        cfl (float): Courant number.
        second_order (bool): Use minmod MUSCL reconstruction.
        walls (bool): Reflect at ``r = R`` instead of copying out.

    Returns:
        RadialProfile: Profiles at ``final_time``.

    Raises:
        ValueError: On invalid resolution or time.
        InadmissibleStateError: If density or pressure turns non-positive.
    """
    if n_cells < 2 or final_time <= 0.0:
        raise ValueError("Need at least two cells and a positive end time")
    faces = np.linspace(0.0, RADIUS, n_cells + 1)
    centres = 0.5 * (faces[1:] + faces[:-1])
    volumes = 0.5 * (faces[1:] ** 2 - faces[:-1] ** 2)
    dr = faces[1] - faces[0]
    w0 = np.where(
        (centres <= SPLIT_RADIUS)[:, None],
        np.array(INNER)[[0, 1, 3]],
        np.array(OUTER)[[0, 1, 3]],
    )
    u = _to_conserved(w0, gamma)
    time, steps = 0.0, 0
    while time < final_time:
        w = _to_primitive(u, gamma)
        sound = np.sqrt(gamma * w[:, 2] / w[:, 0])
        smax = float(np.max(abs(w[:, 1]) + sound))
        dt = min(cfl * dr / smax, final_time - time)
        args = (faces, volumes, gamma, second_order, walls)
        stage = u + dt * _residual(u, *args)
        u = 0.5 * (u + stage + dt * _residual(stage, *args))
        w = _to_primitive(u, gamma)
        if np.any(w[:, 0] <= 0.0) or np.any(w[:, 2] <= 0.0):
            raise InadmissibleStateError(
                f"Radial reference lost positivity at t={time:.4e}"
            )
        time += dt
        steps += 1
    logger.info(f"✅ Radial reference done: {steps} steps, {n_cells} cells")
    w = _to_primitive(u, gamma)
    return RadialProfile(centres, w[:, 0], w[:, 1], w[:, 2], time)
