from dataclasses import replace
from typing import Any

import numpy as np
import pytest
from numpy.typing import NDArray
from pytest_mock import MockerFixture

from src.aledg.cases.base import CaseDefinition
from src.aledg.cases.registry import init_case
from src.aledg.numerics.dg_scheme import DGSolution
from src.aledg.numerics.exceptions import (
    PredictorDivergenceError,
    SolverError,
    StepRejectedError,
    TangledMeshError,
)
from src.aledg.numerics.mesh import TriMesh
from src.aledg.numerics.physics import GasModel, primitive_to_conserved
from src.aledg.numerics.predictor import PredictorSolution, run_predictor
from src.aledg.services.simulation_service import (
    MAX_STEP_ATTEMPTS,
    AleDgSolver,
)
from src.aledg.utils.config import SimulationConfig

FloatArray = NDArray[np.float64]


@pytest.fixture  # type: ignore[misc]
def flow(gas: GasModel) -> FloatArray:
    return primitive_to_conserved(np.array([1.0, 0.5, 0.25, 1.0]), gas)


def _solver(
    mesh: TriMesh,
    model: GasModel,
    flow: FloatArray,
    check_geometry: bool = False,
    **overrides: Any,
) -> AleDgSolver:
    def uniform(points: FloatArray) -> FloatArray:
        return np.tile(flow, (points.shape[0], 1))

    case = CaseDefinition(name="uniform", model=model, initial_state=uniform)
    config = SimulationConfig(case="uniform", order=1, cfl=0.4)
    config = config.with_overrides({"final_time": 0.02, **overrides})
    coeffs = np.zeros((mesh.n_cells, 3, 4))
    coeffs[:, 0] = flow
    return AleDgSolver(
        mesh,
        DGSolution(coeffs=coeffs, time=0.0),
        case,
        config,
        check_geometry=check_geometry,
    )


def test_run_lagrangian_free_stream_stays_uniform(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow)
    start = solver.state.positions.copy()

    # Act
    final = solver.run()

    # Assert
    assert final.time == 0.02
    np.testing.assert_allclose(
        final.coeffs[:, 0], np.broadcast_to(flow, (32, 4)), atol=1e-10
    )
    np.testing.assert_allclose(final.coeffs[:, 1:], 0.0, atol=1e-10)
    np.testing.assert_allclose(
        solver.state.positions,
        start + 0.02 * np.array([0.5, 0.25]),
        atol=1e-10,
    )
    diagnostics = solver.diagnostics
    assert diagnostics.steps == len(solver.history) >= 2
    assert diagnostics.rejected_steps == 0
    assert diagnostics.max_flagged == 0
    np.testing.assert_allclose(
        diagnostics.final_totals, diagnostics.initial_totals, rtol=1e-12
    )


def test_step_checks_geometry_when_requested(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow, check_geometry=True)

    # Act
    report = solver.step()

    # Assert
    assert report.gcl_residual is not None
    assert report.gcl_residual < 1e-12
    assert report.attempts == 1


def test_step_clips_to_final_time(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Act
    report = _solver(periodic_mesh, gas, flow).step(final_time=0.001)

    # Assert
    assert report.time == 0.001
    assert report.dt == pytest.approx(0.001)


def test_step_rejected_attempt_is_retried_with_half_step(
    gas: GasModel,
    periodic_mesh: TriMesh,
    flow: FloatArray,
    mocker: MockerFixture,
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow)
    original = solver.attempt
    calls = {"n": 0}

    def flaky(state: Any, dt: float) -> Any:
        calls["n"] += 1
        if calls["n"] == 1:
            raise TangledMeshError("3 tangled subcells")
        return original(state, dt)

    mock_attempt = mocker.patch.object(solver, "attempt", side_effect=flaky)

    # Act
    report = solver.step()

    # Assert
    assert report.attempts == 2
    first_dt = mock_attempt.call_args_list[0].args[1]
    second_dt = mock_attempt.call_args_list[1].args[1]
    assert second_dt == pytest.approx(0.5 * first_dt)
    assert report.dt == pytest.approx(second_dt)
    assert solver.diagnostics.rejected_steps == 1


def test_step_every_attempt_rejected_reraises(
    gas: GasModel,
    periodic_mesh: TriMesh,
    flow: FloatArray,
    mocker: MockerFixture,
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow)
    mock_attempt = mocker.patch.object(
        solver, "attempt", side_effect=StepRejectedError("negative density")
    )

    # Act / Assert
    with pytest.raises(StepRejectedError, match="negative density"):
        solver.step()
    assert mock_attempt.call_count == MAX_STEP_ATTEMPTS
    assert solver.history == []
    assert solver.state.time == 0.0


def test_run_step_limit_raises(
    gas: GasModel, periodic_mesh: TriMesh, flow: FloatArray
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow, max_steps=1)

    # Act / Assert
    with pytest.raises(SolverError, match="Step limit 1"):
        solver.run()


def test_run_calls_output_every_step_and_at_end(
    gas: GasModel,
    periodic_mesh: TriMesh,
    flow: FloatArray,
    mocker: MockerFixture,
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow, output_every=1)
    on_output = mocker.Mock()

    # Act
    solver.run(on_output)

    # Assert
    steps = len(solver.history)
    assert on_output.call_count == steps + 1
    on_output.assert_called_with(solver, steps)


def test_step_predictor_failure_halves_step(
    gas: GasModel,
    periodic_mesh: TriMesh,
    flow: FloatArray,
    mocker: MockerFixture,
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow)
    calls = {"n": 0}

    def diverge_once(*args: Any, **kwargs: Any) -> PredictorSolution:
        calls["n"] += 1
        solution = run_predictor(*args, **kwargs)
        if calls["n"] == 1:
            failed = solution.failed.copy()
            failed[4] = True
            return replace(solution, failed=failed)
        return solution

    mock_predictor = mocker.patch(
        "src.aledg.services.simulation_service.run_predictor",
        side_effect=diverge_once,
    )

    # Act
    report = solver.step()

    # Assert
    assert report.attempts == 2
    first_dt = mock_predictor.call_args_list[0].args[3]
    second_dt = mock_predictor.call_args_list[1].args[3]
    assert second_dt == pytest.approx(0.5 * first_dt)
    assert report.dt == pytest.approx(second_dt)
    assert solver.diagnostics.rejected_steps == 1


def test_step_predictor_never_converging_reraises(
    gas: GasModel,
    periodic_mesh: TriMesh,
    flow: FloatArray,
    mocker: MockerFixture,
) -> None:
    # Arrange
    solver = _solver(periodic_mesh, gas, flow)

    def never_converge(*args: Any, **kwargs: Any) -> PredictorSolution:
        solution = run_predictor(*args, **kwargs)
        return replace(solution, failed=np.ones_like(solution.failed))

    mock_predictor = mocker.patch(
        "src.aledg.services.simulation_service.run_predictor",
        side_effect=never_converge,
    )

    # Act / Assert
    with pytest.raises(PredictorDivergenceError, match="32 cells"):
        solver.step()
    assert mock_predictor.call_count == MAX_STEP_ATTEMPTS
    assert solver.history == []


def test_run_smooth_vortex_never_limits() -> None:
    # Arrange
    config = SimulationConfig(
        case="vortex", order=1, final_time=0.1, resolution=(20, 20)
    )
    mesh, solution, case = init_case("vortex", config)
    solver = AleDgSolver(mesh, solution, case, config)

    # Act
    final = solver.run()

    # Assert
    assert final.time == pytest.approx(0.1)
    assert solver.diagnostics.max_flagged == 0
    assert all(report.flagged == 0 for report in solver.history)
