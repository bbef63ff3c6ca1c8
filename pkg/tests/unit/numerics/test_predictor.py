from typing import Callable

import numpy as np
import pytest
from numpy.typing import NDArray

from src.aledg.cases.vortex import vortex_primitive
from src.aledg.numerics.dg_scheme import build_dg_operators, l2_project
from src.aledg.numerics.exceptions import PredictorDivergenceError
from src.aledg.numerics.mesh import TriMesh
from src.aledg.numerics.physics import (
    GasModel,
    euler_flux,
    primitive_to_conserved,
)
from src.aledg.numerics.predictor import (
    MotionMode,
    build_predictor_operators,
    local_predictor,
    run_predictor,
    time_integrated_node_state,
    time_integrated_node_states,
)
from src.aledg.numerics.topology import build_topology, reference_positions

FloatArray = NDArray[np.float64]


def _uniform_coeffs(state: FloatArray, n_cells: int, n_dof: int) -> FloatArray:
    coeffs = np.zeros((n_cells, n_dof, 4))
    coeffs[:, 0, :] = state
    return coeffs


@pytest.fixture  # type: ignore[misc]
def flow(gas: GasModel) -> FloatArray:
    return primitive_to_conserved(np.array([1.0, 1.0, 0.5, 1.0]), gas)


@pytest.mark.parametrize("degree", [1, 2])  # type: ignore[misc]
def test_run_predictor_uniform_flow_stays_uniform(
    degree: int, gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(degree)
    positions = reference_positions(periodic_mesh, ops.subgrid)
    coeffs = _uniform_coeffs(flow, periodic_mesh.n_cells, ops.basis.n_dof)
    dt = 0.01

    # Act
    solution = run_predictor(ops, coeffs, positions, dt, 0.0, gas)

    # Assert
    np.testing.assert_allclose(
        solution.states, np.broadcast_to(flow, solution.states.shape)
    )
    expected = ops.tau[None, :, None] * dt * np.array([1.0, 0.5])
    np.testing.assert_allclose(
        solution.displacements,
        np.broadcast_to(expected, solution.displacements.shape),
        atol=1e-14,
    )
    assert solution.n_failed == 0
    assert int(solution.iterations.max()) <= 2


def test_run_predictor_eulerian_mode_does_not_move(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(1)
    positions = reference_positions(periodic_mesh, ops.subgrid)
    coeffs = _uniform_coeffs(flow, periodic_mesh.n_cells, ops.basis.n_dof)

    # Act
    solution = run_predictor(
        ops, coeffs, positions, 0.01, 0.0, gas, mode=MotionMode.EULERIAN
    )

    # Assert
    np.testing.assert_allclose(solution.displacements, 0.0)
    np.testing.assert_allclose(solution.velocities, 0.0)


def test_run_predictor_prescribed_without_field_raises(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(1)
    positions = reference_positions(periodic_mesh, ops.subgrid)
    coeffs = _uniform_coeffs(flow, periodic_mesh.n_cells, ops.basis.n_dof)

    # Act / Assert
    with pytest.raises(ValueError, match="velocity field"):
        run_predictor(
            ops,
            coeffs,
            positions,
            0.01,
            0.0,
            gas,
            mode=MotionMode.PRESCRIBED,
        )


def test_run_predictor_non_positive_step_raises(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(1)
    positions = reference_positions(periodic_mesh, ops.subgrid)
    coeffs = _uniform_coeffs(flow, periodic_mesh.n_cells, ops.basis.n_dof)

    # Act / Assert
    with pytest.raises(ValueError, match="Time step must be positive"):
        run_predictor(ops, coeffs, positions, 0.0, 0.0, gas)


def test_run_predictor_inadmissible_cell_is_reported_failed(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(1)
    positions = reference_positions(periodic_mesh, ops.subgrid)
    coeffs = _uniform_coeffs(flow, periodic_mesh.n_cells, ops.basis.n_dof)
    coeffs[3, 0, 3] = -5.0

    # Act
    solution = run_predictor(ops, coeffs, positions, 0.01, 0.0, gas)

    # Assert
    assert solution.failed[3]
    assert solution.n_failed == 1
    np.testing.assert_allclose(
        solution.states[0], np.broadcast_to(flow, solution.states[0].shape)
    )


def test_local_predictor_nan_state_raises(
    gas: GasModel, periodic_mesh: TriMesh
) -> None:
    # Arrange
    ops = build_predictor_operators(1)
    positions = reference_positions(periodic_mesh, ops.subgrid)[0]
    coeffs = np.full((ops.basis.n_dof, 4), np.nan)

    # Act / Assert
    with pytest.raises(PredictorDivergenceError):
        local_predictor(ops, coeffs, positions, 0.01, gas)


def test_time_integrated_node_states_of_uniform_flow(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    dg = build_dg_operators(1)
    topology = build_topology(periodic_mesh, dg.subgrid)
    positions = reference_positions(periodic_mesh, dg.subgrid)
    coeffs = _uniform_coeffs(flow, topology.n_cells, dg.basis.n_dof)
    solution = local_predictor(
        dg.predictor, coeffs[0], positions[0], 0.01, gas
    )

    # Act
    nodes = time_integrated_node_states(dg.predictor, solution)
    single = time_integrated_node_state(dg.predictor, solution, 0, 4)

    # Assert
    assert nodes.shape == (1, dg.subgrid.n_nodes, 4)
    np.testing.assert_allclose(nodes[0], np.tile(flow, (10, 1)))
    np.testing.assert_allclose(single, flow)


def test_run_predictor_cell_result_ignores_other_cells(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    ops = build_predictor_operators(2)
    n_cells = periodic_mesh.n_cells
    positions = reference_positions(periodic_mesh, ops.subgrid)
    rng = np.random.default_rng(7)
    coeffs = _uniform_coeffs(flow, n_cells, ops.basis.n_dof)
    coeffs[:, 1:] += 0.01 * rng.normal(size=coeffs[:, 1:].shape)
    others = np.arange(1, n_cells)
    order = rng.permutation(others)
    shuffled = coeffs.copy()
    shuffled[others] = coeffs[order]
    shuffled[others, 1:] *= 3.0
    moved = positions.copy()
    moved[others] = positions[order]

    # Act
    base = run_predictor(ops, coeffs, positions, 0.005, 0.0, gas)
    other = run_predictor(ops, shuffled, moved, 0.005, 0.0, gas)

    # Assert
    assert base.iterations[0] == other.iterations[0]
    np.testing.assert_allclose(
        other.states[0], base.states[0], rtol=1e-14, atol=1e-15
    )
    np.testing.assert_allclose(
        other.displacements[0], base.displacements[0], rtol=1e-14, atol=1e-15
    )


def _vortex(time: float, gas: GasModel) -> Callable[[FloatArray], FloatArray]:
    def state(points: FloatArray) -> FloatArray:
        return primitive_to_conserved(
            vortex_primitive(points, time, gas.gamma), gas
        )

    return state


@pytest.mark.parametrize("degree", [1, 2])  # type: ignore[misc]
def test_run_predictor_vortex_increment_converges_at_design_order(
    degree: int, gas: GasModel
) -> None:
    # Arrange
    dg = build_dg_operators(degree)
    nodes = dg.subgrid.nodes
    top = np.column_stack([nodes, np.ones(nodes.shape[0])])
    trace = dg.predictor.spacetime.evaluate(top)
    start = dg.basis.evaluate(nodes)
    origin = np.array([5.8, 5.4])
    sizes = np.array([0.1, 0.05, 0.025])

    # Act
    errors = []
    for h in sizes:
        pos = (origin + h * nodes)[np.newaxis]
        dt = 0.02 * h
        coeffs = l2_project(dg, pos, _vortex(0.0, gas))
        solution = run_predictor(
            dg.predictor,
            coeffs,
            pos,
            dt,
            0.0,
            gas,
            mode=MotionMode.EULERIAN,
        )
        increment = trace @ solution.states[0] - start @ coeffs[0]
        exact = _vortex(dt, gas)(pos[0]) - _vortex(0.0, gas)(pos[0])
        errors.append(np.abs(increment - exact).max())

    # Assert
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert slope >= degree + 0.5


def _lattice(degree: int) -> FloatArray:
    return np.array(
        [
            (i / degree, j / degree)
            for j in range(degree + 1)
            for i in range(degree + 1 - j)
        ]
    )


def _nodal_derivatives(points: FloatArray, degree: int) -> FloatArray:
    """d/dxi and d/deta of the monomial interpolant on ``points``."""
    powers = [(a, t - a) for t in range(degree + 1) for a in range(t + 1)]
    x, y = points[:, 0], points[:, 1]
    vander = np.column_stack([x**a * y**b for a, b in powers])
    dx = np.column_stack([a * x ** max(a - 1, 0) * y**b for a, b in powers])
    dy = np.column_stack([b * x**a * y ** max(b - 1, 0) for a, b in powers])
    inverse = np.linalg.inv(vander)
    return np.stack([dx @ inverse, dy @ inverse])


def test_run_predictor_density_wave_trace_matches_rk4(gas: GasModel) -> None:
    # Arrange
    degree = 2
    dg = build_dg_operators(degree)
    origin, h, dt = np.array([0.3, 0.2]), 0.25, 0.02
    drift = np.array([1.0, 0.5])

    def wave(points: FloatArray) -> FloatArray:
        x, y = points[:, 0], points[:, 1]
        rho = 1.0 + 0.2 * x + 0.1 * y**2 - 0.05 * x * y
        ones = np.ones_like(x)
        primitive = np.column_stack(
            [rho, drift[0] * ones, drift[1] * ones, ones]
        )
        return primitive_to_conserved(primitive, gas)

    ref = _lattice(degree)
    x_nodes = origin + h * ref
    derivatives = _nodal_derivatives(ref, degree) / h

    def rhs(q: FloatArray) -> FloatArray:
        flux = euler_flux(q, gas)
        return -np.asarray(
            derivatives[0] @ flux[..., 0] + derivatives[1] @ flux[..., 1]
        )

    q = wave(x_nodes)
    substeps = 20
    k = dt / substeps
    for _ in range(substeps):
        k1 = rhs(q)
        k2 = rhs(q + 0.5 * k * k1)
        k3 = rhs(q + 0.5 * k * k2)
        k4 = rhs(q + k * k3)
        q = q + k / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    pos = (origin + h * dg.subgrid.nodes)[np.newaxis]
    coeffs = l2_project(dg, pos, wave)

    # Act
    solution = run_predictor(
        dg.predictor, coeffs, pos, dt, 0.0, gas, mode=MotionMode.EULERIAN
    )

    # Assert
    top = np.column_stack([ref, np.ones(ref.shape[0])])
    trace = dg.predictor.spacetime.evaluate(top) @ solution.states[0]
    assert solution.n_failed == 0
    np.testing.assert_allclose(trace, q, atol=1e-9)
    np.testing.assert_allclose(trace, wave(x_nodes - dt * drift), atol=1e-9)
