"""Common description of a benchmark problem."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.boundary import BoundaryConditions
from src.aledg.numerics.mesh import TriMesh
from src.aledg.numerics.physics import GasModel, primitive_to_conserved
from src.aledg.utils.config import SimulationConfig

FloatArray = NDArray[np.float64]
InitialState = Callable[[FloatArray], FloatArray]
ExactSolution = Callable[[FloatArray, float], FloatArray]
VelocityField = Callable[[FloatArray, float], FloatArray]
PrimitiveField = Callable[[FloatArray, float], FloatArray]


@dataclass(frozen=True)
class CaseDefinition:
    """Initial data, boundary data and references of one benchmark.

    Attributes:
        name (str): Registry name.
        model (GasModel): Gas model of the case.
        initial_state (InitialState): Conserved state at points (n, 2).
        conditions (BoundaryConditions): Ghost state data.
        exact_solution (Optional[ExactSolution]): Conserved exact state at
            points and time, when known.
        mesh_velocity (Optional[VelocityField]): Velocity for prescribed mesh
            motion.
        cell_overrides (Mapping[int, FloatArray]): Constant conserved states
            replacing the projection in selected cells.
        parameters (Dict[str, Any]): Case symbols for reports.
    """

    name: str
    model: GasModel
    initial_state: InitialState
    conditions: BoundaryConditions = BoundaryConditions()
    exact_solution: Optional[ExactSolution] = None
    mesh_velocity: Optional[VelocityField] = None
    cell_overrides: Mapping[int, FloatArray] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)


def conserved_field(
    field_fn: PrimitiveField, model: GasModel
) -> ExactSolution:
    """Wrap a primitive ``(rho, u, v, p)`` field as a conserved one."""

    def exact(points: FloatArray, time: float) -> FloatArray:
        return primitive_to_conserved(field_fn(points, time), model)

    return exact


def at_time_zero(exact: ExactSolution) -> InitialState:
    def initial(points: FloatArray) -> FloatArray:
        return exact(points, 0.0)

    return initial


def uniform_primitive(
    values: FloatArray, points: FloatArray
) -> FloatArray:
    """Broadcast one primitive state to all points, (n, 4)."""
    return np.broadcast_to(
        np.asarray(values, dtype=float), (points.shape[0], 4)
    ).copy()


CaseBuilder = Callable[[SimulationConfig], Tuple[TriMesh, CaseDefinition]]
