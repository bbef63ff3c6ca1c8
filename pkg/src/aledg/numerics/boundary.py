from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.mesh import BoundaryTag
from src.aledg.numerics.physics import GasModel

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
ExactState = Callable[[FloatArray, float], FloatArray]


@dataclass(frozen=True)
class BoundaryConditions:
    """Data needed to build ghost states on tagged boundary faces.

    Attributes:
        exact_state (Optional[ExactState]): Conserved state at points
            (n, 2) and time t, for EXACT_DIRICHLET faces.
        wall_velocity (Tuple[float, float]): Velocity of MOVING_WALL faces.
    """

    exact_state: Optional[ExactState] = None
    wall_velocity: Tuple[float, float] = (0.0, 0.0)


def ghost_states(
    q: FloatArray,
    normals: FloatArray,
    wall_normal_velocity: FloatArray,
    tags: IntArray,
    points: FloatArray,
    time: float,
    conditions: BoundaryConditions,
    model: GasModel,
) -> FloatArray:
    """Outer states on boundary faces, shape of ``q``.

    Args:
        q (FloatArray): Interior states, (n, 4).
        normals (FloatArray): Outward unit normals, (n, 2).
        wall_normal_velocity (FloatArray): Normal speed of the boundary, (n,).
        tags (IntArray): ``BoundaryTag`` per point, (n,).
        points (FloatArray): Physical positions, (n, 2).
        time (float): Physical time of the points.
        conditions (BoundaryConditions): Boundary data.
        model (GasModel): Gas model.

    Returns:
        FloatArray: Transmissive faces copy, walls reflect the normal
        velocity relative to the wall and Dirichlet faces take the exact
        state.
    """
    out = np.array(q, dtype=float, copy=True)
    wall = (tags == BoundaryTag.SLIP_WALL) | (tags == BoundaryTag.MOVING_WALL)
    if np.any(wall):
        qw, nw = q[wall], normals[wall]
        rho = qw[:, 0]
        v = qw[:, 1:3] / rho[:, np.newaxis]
        p = (model.gamma - 1.0) * (qw[:, 3] - 0.5 * rho * np.sum(v**2, -1))
        vn = np.sum(v * nw, axis=-1) - wall_normal_velocity[wall]
        vg = v - 2.0 * vn[:, np.newaxis] * nw
        out[wall, 1:3] = rho[:, np.newaxis] * vg
        out[wall, 3] = p / (model.gamma - 1.0) + 0.5 * rho * np.sum(
            vg**2, -1
        )
    dirichlet = tags == BoundaryTag.EXACT_DIRICHLET
    if np.any(dirichlet):
        if conditions.exact_state is None:
            raise ValueError("Dirichlet boundary without an exact state")
        out[dirichlet] = conditions.exact_state(points[dirichlet], time)
    return out


def wall_normal_speed(
    tags: IntArray, normals: FloatArray, conditions: BoundaryConditions
) -> FloatArray:
    """Normal speed of walls at t^n; zero except on moving walls."""
    moving = tags == BoundaryTag.MOVING_WALL
    speed = np.zeros(tags.shape)
    speed[moving] = normals[moving] @ np.asarray(conditions.wall_velocity)
    return speed
