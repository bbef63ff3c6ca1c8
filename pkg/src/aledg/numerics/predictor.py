"""Element-local space-time predictor.

Each cell evolves its DG polynomial and its geometry over one time step
without neighbor data. The state and the node displacement are expanded in
the nodal space-time basis and the weak form, integrated by parts in time,
is solved by fixed-point iteration:

    K1 q = F0 u + M S(q, x),      K1 d = M (dt V(q, x)),

where ``S = dt (-div_x F + V . grad_x q)`` is the time derivative along the
moving reference coordinates and ``x = X^n(xi) + d`` with ``X^n`` the
piecewise linear subgrid geometry at the start of the step.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.basis import (
    PolynomialBasis,
    SpaceTimeBasis,
    build_basis,
    build_spacetime_basis,
    interval_quadrature,
    triangle_quadrature,
)
from src.aledg.numerics.exceptions import PredictorDivergenceError
from src.aledg.numerics.physics import (
    GasModel,
    admissible_mask,
    physical_flux,
    velocity,
)
from src.aledg.numerics.subgrid import (
    SubGrid,
    build_subgrid,
    edge_matrices,
)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]
VelocityField = Callable[[FloatArray, float], FloatArray]

logger = logging.getLogger(__name__)

PICARD_TOLERANCE = 1e-12
MAX_PICARD_ITERATIONS = 100


class MotionMode(str, Enum):
    """How the mesh velocity is chosen."""

    LAGRANGIAN = "lagrangian"
    PRESCRIBED = "prescribed"
    EULERIAN = "eulerian"


@dataclass(frozen=True)
class PredictorOperators:
    """Reference operators of the predictor for one polynomial degree.

    Attributes:
        basis (PolynomialBasis): Modal spatial basis.
        spacetime (SpaceTimeBasis): Nodal space-time basis.
        subgrid (SubGrid): Reference subgrid defining the geometry.
        phi_nodes (FloatArray): Modal functions at the node positions,
            (L, n_dof).
        derivatives (FloatArray): ``D[a, m, l]`` derivative of theta_l along
            reference axis a at node m, (3, L, L).
        state_update (FloatArray): ``K1^-1 F0``, (L, n_dof).
        source_update (FloatArray): ``K1^-1 M``, (L, L).
        node_subcell (IntArray): Subcell holding each node, (L,).
        subcell_inverse (FloatArray): Inverse reference edge matrices of the
            subcells, (S, 2, 2).
        time_integral (FloatArray): ``int_0^1 theta_l(xi_k, tau) dtau`` at
            every reference subnode, (K, L).
    """

    basis: PolynomialBasis
    spacetime: SpaceTimeBasis
    subgrid: SubGrid
    phi_nodes: FloatArray
    derivatives: FloatArray
    state_update: FloatArray
    source_update: FloatArray
    node_subcell: IntArray
    subcell_inverse: FloatArray
    time_integral: FloatArray

    @property
    def n_nodes(self) -> int:
        return self.spacetime.n_dof

    @property
    def tau(self) -> FloatArray:
        return self.spacetime.nodes[:, 2]


@dataclass
class PredictorSolution:
    """Nodal space-time expansion of every cell.

    Attributes:
        states (FloatArray): State coefficients, (C, L, 4).
        displacements (FloatArray): Node displacement from the piecewise
            linear start geometry, (C, L, 2).
        velocities (FloatArray): Mesh velocity at the nodes, (C, L, 2).
        iterations (IntArray): Picard iterations used per cell.
        residuals (FloatArray): Last relative increment per cell.
        failed (BoolArray): Cells that did not converge or left the
            admissible set.
    """

    states: FloatArray
    displacements: FloatArray
    velocities: FloatArray
    iterations: IntArray
    residuals: FloatArray
    failed: BoolArray

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(self.failed))


def _locate(points: FloatArray, subgrid: SubGrid) -> IntArray:
    corners = subgrid.nodes[subgrid.subcells]
    inverse = np.linalg.inv(edge_matrices(corners))
    rel = points[:, np.newaxis, :] - corners[np.newaxis, :, 0, :]
    lam = np.einsum("sij,psj->psi", inverse, rel)
    inside = np.all(lam >= -1e-12, axis=-1) & (lam.sum(-1) <= 1.0 + 1e-12)
    return np.argmax(inside, axis=1).astype(np.int64)


@lru_cache(maxsize=None)
def build_predictor_operators(degree: int) -> PredictorOperators:
    """Assemble the reference predictor operators for degree N (1..3)."""
    basis = build_basis(degree)
    st = build_spacetime_basis(degree)
    subgrid = build_subgrid(degree)
    tri = triangle_quadrature(2 * degree + 1)
    line = interval_quadrature(degree + 1)

    n_tri, n_line = tri.points.shape[0], line.points.shape[0]
    pts = np.column_stack(
        [
            np.repeat(tri.points, n_line, axis=0),
            np.tile(line.points, n_tri),
        ]
    )
    wts = np.repeat(tri.weights, n_line) * np.tile(line.weights, n_tri)
    theta = st.evaluate(pts)
    dtheta_tau = st.gradient(pts)[:, :, 2]
    top = st.evaluate(np.column_stack([tri.points, np.ones(n_tri)]))
    bottom = st.evaluate(np.column_stack([tri.points, np.zeros(n_tri)]))

    mass = np.einsum("q,qk,ql->kl", wts, theta, theta)
    k1 = np.einsum("q,qk,ql->kl", tri.weights, top, top) - np.einsum(
        "q,qk,ql->kl", wts, dtheta_tau, theta
    )
    f0 = np.einsum(
        "q,qk,qm->km", tri.weights, bottom, basis.evaluate(tri.points)
    )
    k1_inv = np.linalg.inv(k1)

    nodes = st.nodes
    derivatives = np.transpose(st.gradient(nodes), (2, 0, 1))

    ref_corners = subgrid.nodes[subgrid.subcells]
    time_integral = np.zeros((subgrid.n_nodes, st.n_dof))
    for tau, w in zip(line.points, line.weights):
        at = np.column_stack(
            [subgrid.nodes, np.full(subgrid.n_nodes, tau)]
        )
        time_integral += w * st.evaluate(at)

    return PredictorOperators(
        basis=basis,
        spacetime=st,
        subgrid=subgrid,
        phi_nodes=basis.evaluate(nodes[:, :2]),
        derivatives=derivatives,
        state_update=k1_inv @ f0,
        source_update=k1_inv @ mass,
        node_subcell=_locate(nodes[:, :2], subgrid),
        subcell_inverse=np.linalg.inv(edge_matrices(ref_corners)),
        time_integral=time_integral,
    )


def start_geometry(
    ops: PredictorOperators, cell_positions: FloatArray
) -> Tuple[FloatArray, FloatArray]:
    """Piecewise linear start geometry at the space-time nodes.

    Args:
        ops (PredictorOperators): Reference operators.
        cell_positions (FloatArray): Cell subnode positions, (C, K, 2).

    Returns:
        Tuple[FloatArray, FloatArray]: Node positions (C, L, 2) and the
        Jacobians ``dx/dxi`` of the node subcells, (C, L, 2, 2).
    """
    sub = ops.subgrid.subcells[ops.node_subcell]
    corners = cell_positions[:, sub]
    ref_inverse = ops.subcell_inverse[ops.node_subcell]
    jac = np.einsum("clij,ljk->clik", edge_matrices(corners), ref_inverse)
    ref_origin = ops.subgrid.nodes[sub[:, 0]]
    offset = ops.spacetime.nodes[:, :2] - ref_origin
    positions = corners[:, :, 0, :] + np.einsum("clij,lj->cli", jac, offset)
    return positions, jac


def _spatial_gradient(
    ops: PredictorOperators, nodal: FloatArray, jac_inv: FloatArray
) -> FloatArray:
    """Physical gradient of nodal data (C, L, ...) -> (C, L, ..., 2)."""
    ref = np.einsum("aml,cl...->cm...a", ops.derivatives[:2], nodal)
    return np.einsum("cm...a,cmai->cm...i", ref, jac_inv)


def _mesh_velocity(
    mode: MotionMode,
    states: FloatArray,
    positions: FloatArray,
    times: FloatArray,
    velocity_field: Optional[VelocityField],
) -> FloatArray:
    if mode is MotionMode.LAGRANGIAN:
        with np.errstate(all="ignore"):
            return velocity(states)
    if mode is MotionMode.PRESCRIBED:
        if velocity_field is None:
            raise ValueError("Prescribed motion needs a velocity field")
        out = np.empty(positions.shape)
        for i, t in enumerate(times):
            out[:, i, :] = velocity_field(positions[:, i, :], float(t))
        return out
    return np.zeros(positions.shape)


def run_predictor(
    ops: PredictorOperators,
    coeffs: FloatArray,
    cell_positions: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    mode: MotionMode = MotionMode.LAGRANGIAN,
    velocity_field: Optional[VelocityField] = None,
    tol: float = PICARD_TOLERANCE,
    max_iterations: int = MAX_PICARD_ITERATIONS,
) -> PredictorSolution:
    """Solve the local space-time problems of all cells.

    Cells are iterated together but each one is frozen as soon as its own
    increments pass ``tol``, so the result of a cell depends only on its own
    data. Cells that do not converge, or produce inadmissible node states,
    keep their last iterate and are reported through ``failed``; callers
    reject the step for them.

    Args:
        ops (PredictorOperators): Reference operators.
        coeffs (FloatArray): Modal coefficients at t^n, (C, n_dof, 4).
        cell_positions (FloatArray): Cell subnode positions at t^n,
            (C, K, 2).
        dt (float): Time step.
        time (float): t^n.
        model (GasModel): Gas model.
        mode (MotionMode): Mesh velocity choice.
        velocity_field (Optional[VelocityField]): V(x, t) for prescribed
            motion.
        tol (float): Relative increment tolerance.
        max_iterations (int): Iteration cap.

    Returns:
        PredictorSolution: Nodal expansions and convergence report.
    """
    if dt <= 0.0:
        raise ValueError(f"Time step must be positive, got {dt}")
    n_cells = coeffs.shape[0]
    tau = ops.tau
    times = time + tau * dt
    x_start, jac_start = start_geometry(ops, cell_positions)
    scale_x = np.maximum(np.ptp(cell_positions, axis=1).max(axis=1), 1e-300)

    q = np.einsum("lk,ckv->clv", ops.phi_nodes, coeffs)
    v0 = _mesh_velocity(mode, q, x_start, times, velocity_field)
    d = tau[np.newaxis, :, np.newaxis] * dt * np.nan_to_num(v0)
    q_source = np.einsum("lk,ckv->clv", ops.state_update, coeffs)

    iterations = np.zeros(n_cells, dtype=np.int64)
    residuals = np.full(n_cells, np.inf)
    failed = np.zeros(n_cells, dtype=bool)
    mesh_velocity = np.zeros_like(d)
    active = np.arange(n_cells)

    for it in range(1, max_iterations + 1):
        if active.size == 0:
            break
        qa, da = q[active], d[active]
        jac = jac_start[active] + np.einsum(
            "aml,clj->cmja", ops.derivatives[:2], da
        )
        with np.errstate(all="ignore"):
            jac_inv = np.linalg.inv(jac)
            grad_q = _spatial_gradient(ops, qa, jac_inv)
            flux = physical_flux(qa, grad_q, model)
            grad_f = _spatial_gradient(ops, flux, jac_inv)
            divergence = np.einsum("clvii->clv", grad_f)
            va = _mesh_velocity(
                mode, qa, x_start[active] + da, times, velocity_field
            )
            source = dt * (
                -divergence + np.einsum("cli,clvi->clv", va, grad_q)
            )
            q_new = q_source[active] + np.einsum(
                "lm,cmv->clv", ops.source_update, source
            )
            d_new = np.einsum("lm,cmj->clj", ops.source_update, dt * va)
            dq = np.abs(q_new - qa).max(axis=(1, 2)) / np.maximum(
                np.abs(q_new).max(axis=(1, 2)), 1.0
            )
            dd = np.abs(d_new - da).max(axis=(1, 2)) / np.maximum(
                np.abs(d_new).max(axis=(1, 2)), scale_x[active]
            )

        q[active], d[active] = q_new, d_new
        mesh_velocity[active] = va
        iterations[active] = it
        residuals[active] = np.maximum(dq, dd)
        bad = ~np.all(admissible_mask(q_new, model), axis=1) | ~np.isfinite(
            residuals[active]
        )
        failed[active[bad]] = True
        done = (residuals[active] < tol) | bad
        active = active[~done]

    failed[active] = True
    if np.any(failed):
        logger.warning(
            f"⚠️ Predictor failed in {int(failed.sum())} cells "
            f"at t={time:.6g}, dt={dt:.3e}"
        )
    logger.debug(
        f"🔁 Predictor converged: max iterations {int(iterations.max())}"
    )
    return PredictorSolution(
        states=q,
        displacements=d,
        velocities=mesh_velocity,
        iterations=iterations,
        residuals=residuals,
        failed=failed,
    )


def local_predictor(
    ops: PredictorOperators,
    coeffs: FloatArray,
    cell_positions: FloatArray,
    dt: float,
    model: GasModel,
    mode: MotionMode = MotionMode.LAGRANGIAN,
    velocity_field: Optional[VelocityField] = None,
    time: float = 0.0,
) -> PredictorSolution:
    """Predictor of a single cell.

    Raises:
        PredictorDivergenceError: If the iteration fails for this cell.
    """
    solution = run_predictor(
        ops,
        coeffs[np.newaxis],
        cell_positions[np.newaxis],
        dt,
        time,
        model,
        mode=mode,
        velocity_field=velocity_field,
    )
    if solution.failed[0]:
        raise PredictorDivergenceError(
            f"Predictor failed after {int(solution.iterations[0])} iterations"
        )
    return solution


def time_integrated_node_states(
    ops: PredictorOperators, solution: PredictorSolution
) -> FloatArray:
    """Time averages of the predictor at every reference subnode, (C, K, 4)."""
    return np.einsum("kl,clv->ckv", ops.time_integral, solution.states)


def time_integrated_node_state(
    ops: PredictorOperators,
    solution: PredictorSolution,
    cell: int,
    subnode: int,
) -> FloatArray:
    """Time average of one cell's predictor at a reference subnode."""
    return ops.time_integral[subnode] @ solution.states[cell]
