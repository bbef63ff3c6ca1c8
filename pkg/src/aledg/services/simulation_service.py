"""Time loop of the direct ALE ADER-DG solver.

One step runs timestep -> predictor -> mesh motion -> corrector -> limiter.
A step that raises ``StepRejectedError`` is retried from the untouched
state at t^n with the step halved, up to ``MAX_STEP_ATTEMPTS`` attempts.
"""

import logging
import time as clock
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from tenacity import (
    RetryCallState,
    Retrying,
    retry_if_exception_type,
    stop_after_attempt,
)

from src.aledg.cases.base import CaseDefinition
from src.aledg.numerics.basis import project_to_subcells
from src.aledg.numerics.dg_scheme import (
    DGOperators,
    DGSolution,
    build_dg_operators,
    cell_mean_states,
    check_gcl,
    compute_timestep,
    corrector,
)
from src.aledg.numerics.exceptions import (
    PredictorDivergenceError,
    SolverError,
    StepRejectedError,
)
from src.aledg.numerics.limiter import build_subcell_adjacency, limit
from src.aledg.numerics.mesh import TriMesh
from src.aledg.numerics.mesh_motion import move_mesh
from src.aledg.numerics.predictor import (
    MotionMode,
    run_predictor,
    time_integrated_node_states,
)
from src.aledg.numerics.topology import (
    build_topology,
    cell_subnode_positions,
    initial_positions,
    subcell_areas,
    subcell_corners,
)
from src.aledg.utils.config import SimulationConfig

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]

logger = logging.getLogger(__name__)

MAX_STEP_ATTEMPTS = 11
LOG_EVERY = 10


@dataclass(frozen=True)
class SolverState:
    """Everything that describes the discrete solution at one time level.

    Attributes:
        coeffs (FloatArray): Modal coefficients, (C, n_dof, 4).
        averages (FloatArray): Subcell averages, (C, S, 4).
        positions (FloatArray): Global subnode positions, (n_nodes, 2).
        flags (BoolArray): Cells limited in the step that produced the state.
        time (float): Physical time.
    """

    coeffs: FloatArray
    averages: FloatArray
    positions: FloatArray
    flags: BoolArray
    time: float


@dataclass(frozen=True)
class StepReport:
    step: int
    time: float
    dt: float
    attempts: int
    flagged: int
    first_order: bool
    predictor_iterations: int
    gcl_residual: Optional[float] = None


@dataclass
class RunDiagnostics:
    """Aggregates over a whole run.

    Attributes:
        steps (int): Accepted steps.
        rejected_steps (int): Rejected attempts over all steps.
        max_predictor_iterations (int): Largest Picard count of any cell.
        max_flagged (int): Largest number of limited cells in one step.
        max_flagged_fraction (float): ``max_flagged`` over the cell count.
        initial_totals (FloatArray): Conserved integrals at t = 0.
        final_totals (FloatArray): Conserved integrals at the end.
        wall_seconds (float): Elapsed wall-clock time.
    """

    steps: int = 0
    rejected_steps: int = 0
    max_predictor_iterations: int = 0
    max_flagged: int = 0
    max_flagged_fraction: float = 0.0
    initial_totals: FloatArray = field(default_factory=lambda: np.zeros(4))
    final_totals: FloatArray = field(default_factory=lambda: np.zeros(4))
    wall_seconds: float = 0.0

    def record(self, report: StepReport, n_cells: int) -> None:
        self.steps += 1
        self.rejected_steps += report.attempts - 1
        self.max_predictor_iterations = max(
            self.max_predictor_iterations, report.predictor_iterations
        )
        if report.flagged > self.max_flagged:
            self.max_flagged = report.flagged
            self.max_flagged_fraction = report.flagged / n_cells


OutputCallback = Callable[["AleDgSolver", int], None]


class AleDgSolver:
    """Advance one case on its moving mesh.

    Attributes:
        mesh (TriMesh): Initial main mesh.
        case (CaseDefinition): Case data.
        config (SimulationConfig): Run configuration.
        ops (DGOperators): Reference tables of degree ``config.order``.
        state (SolverState): Current solution.
        history (List[StepReport]): Reports of the accepted steps.
    """

    def __init__(
        self,
        mesh: TriMesh,
        solution: DGSolution,
        case: CaseDefinition,
        config: SimulationConfig,
        check_geometry: bool = False,
    ) -> None:
        self.mesh = mesh
        self.case = case
        self.config = config
        self.check_geometry = check_geometry
        self.ops: DGOperators = build_dg_operators(config.order)
        self.topology = build_topology(mesh, self.ops.subgrid)
        self.adjacency = build_subcell_adjacency(self.topology)
        coeffs = np.asarray(solution.coeffs, dtype=float)
        self.state = SolverState(
            coeffs=coeffs,
            averages=project_to_subcells(coeffs, self.ops.projection),
            positions=initial_positions(mesh, self.topology),
            flags=np.zeros(self.topology.n_cells, dtype=bool),
            time=solution.time,
        )
        self.history: List[StepReport] = []
        self.diagnostics = RunDiagnostics(initial_totals=self.totals())

    @property
    def solution(self) -> DGSolution:
        return DGSolution(coeffs=self.state.coeffs, time=self.state.time)

    def cell_positions(self) -> FloatArray:
        """Cell subnode positions of the current state, (C, K, 2)."""
        return cell_subnode_positions(self.topology, self.state.positions)

    def subcell_corners(self) -> FloatArray:
        return subcell_corners(self.topology, self.state.positions)

    def subcell_areas(self) -> FloatArray:
        return subcell_areas(self.topology, self.state.positions)

    def cell_means(self) -> FloatArray:
        """Cell-mean conserved states, (C, 4)."""
        return cell_mean_states(self.state.averages, self.subcell_areas())

    def totals(self) -> FloatArray:
        """Domain integrals of the conserved variables, (4,)."""
        return np.asarray(
            np.einsum(
                "cs,csv->v", self.subcell_areas(), self.state.averages
            )
        )

    def stable_timestep(self) -> float:
        """CFL time step of the current state, not clipped to t_f."""
        vertices = self.cell_positions()[:, self.ops.subgrid.vertex_nodes]
        return compute_timestep(
            self.cell_means(),
            vertices,
            self.case.model,
            self.config.cfl,
            self.config.order,
        )

    def attempt(
        self, state: SolverState, dt: float
    ) -> Tuple[SolverState, StepReport]:
        """One step of size ``dt`` from ``state``; ``state`` is not changed.

        Raises:
            StepRejectedError: If any stage rejects the step.
        """
        ops, topology, case = self.ops, self.topology, self.case
        config = self.config
        model = case.model
        pos_old = cell_subnode_positions(topology, state.positions)
        prediction = run_predictor(
            ops.predictor,
            state.coeffs,
            pos_old,
            dt,
            state.time,
            model,
            mode=config.motion,
            velocity_field=case.mesh_velocity,
        )
        if prediction.n_failed:
            raise PredictorDivergenceError(
                f"Predictor failed in {prediction.n_failed} cells"
            )
        node_states = (
            time_integrated_node_states(ops.predictor, prediction)
            if config.motion is MotionMode.LAGRANGIAN
            else None
        )
        motion = move_mesh(
            topology,
            state.positions,
            dt,
            state.time,
            config.motion,
            model,
            case.conditions,
            node_states=node_states,
            subcell_averages=state.averages,
            flags=state.flags,
            velocity_field=case.mesh_velocity,
            relaxation=config.relaxation,
            constant_omega=config.relaxation_omega,
        )
        pos_new = cell_subnode_positions(topology, motion.positions)
        result = corrector(
            ops,
            topology,
            state.coeffs,
            prediction,
            pos_old,
            pos_new,
            dt,
            state.time,
            model,
            case.conditions,
        )
        limited = limit(
            ops,
            topology,
            self.adjacency,
            result,
            state.averages,
            pos_old,
            pos_new,
            dt,
            state.time,
            model,
            case.conditions,
        )
        residual = None
        if self.check_geometry:
            residual = float(
                np.max(check_gcl(ops, topology, pos_old, pos_new, dt))
            )
        new_state = SolverState(
            coeffs=limited.coeffs,
            averages=limited.subcell_averages,
            positions=motion.positions,
            flags=limited.flags,
            time=state.time + dt,
        )
        report = StepReport(
            step=len(self.history) + 1,
            time=new_state.time,
            dt=dt,
            attempts=1,
            flagged=limited.n_flagged,
            first_order=limited.first_order,
            predictor_iterations=int(np.max(prediction.iterations)),
            gcl_residual=residual,
        )
        return new_state, report

    @staticmethod
    def _log_rejection(retry_state: RetryCallState) -> None:
        error = (
            retry_state.outcome.exception()
            if retry_state.outcome is not None
            else None
        )
        logger.warning(
            f"⚠️ Step attempt {retry_state.attempt_number} rejected: "
            f"{error}; halving the time step",
            extra={"attempt": retry_state.attempt_number},
        )

    def step(self, final_time: Optional[float] = None) -> StepReport:
        """Advance by one accepted step, clipped to ``final_time``.

        Attempt k uses ``dt / 2^(k-1)``; after ``MAX_STEP_ATTEMPTS`` failures
        the last rejection is re-raised.

        Raises:
            StepRejectedError: If every attempt was rejected.
        """
        start = self.state
        dt = self.stable_timestep()
        clipped = False
        if final_time is not None and start.time + dt >= final_time:
            dt = final_time - start.time
            clipped = True

        retrying = Retrying(
            retry=retry_if_exception_type(StepRejectedError),
            stop=stop_after_attempt(MAX_STEP_ATTEMPTS),
            before_sleep=self._log_rejection,
            reraise=True,
        )
        k = 0
        for attempt in retrying:
            with attempt:
                k = attempt.retry_state.attempt_number
                trial = dt / 2 ** (k - 1)
                new_state, report = self.attempt(start, trial)

        if clipped and k == 1 and final_time is not None:
            new_state = replace(new_state, time=final_time)
        report = replace(report, attempts=k, time=new_state.time)
        self.state = new_state
        self.history.append(report)
        self.diagnostics.record(report, self.topology.n_cells)
        return report

    def run(self, on_output: Optional[OutputCallback] = None) -> DGSolution:
        """Integrate to ``config.final_time``.

        Args:
            on_output (Optional[OutputCallback]): Called as
                ``on_output(solver, step)`` every ``config.output_every``
                steps and once at the end.

        Returns:
            DGSolution: Solution at exactly ``config.final_time``.

        Raises:
            StepRejectedError: If a step cannot be completed.
            SolverError: If ``config.max_steps`` is exceeded.
        """
        config = self.config
        final_time = config.final_time
        started = clock.perf_counter()
        logger.info(
            f"🚀 Running '{self.case.name}' N={config.order} on "
            f"{self.topology.n_cells} cells to t={final_time}"
        )
        steps = 0
        while self.state.time < final_time:
            if steps >= config.max_steps:
                raise SolverError(
                    f"Step limit {config.max_steps} reached at "
                    f"t={self.state.time:.6g}"
                )
            try:
                report = self.step(final_time)
            except StepRejectedError:
                logger.exception(
                    f"❌ Step {steps + 1} failed at t={self.state.time:.6g} "
                    f"after {MAX_STEP_ATTEMPTS} attempts",
                    extra={"step": steps + 1, "time": self.state.time},
                )
                raise
            steps += 1
            if steps % LOG_EVERY == 0 or report.flagged:
                logger.info(
                    f"Step {report.step}: t={report.time:.6g}, "
                    f"dt={report.dt:.3e}, flagged={report.flagged}",
                    extra={
                        "step": report.step,
                        "time": report.time,
                        "dt": report.dt,
                        "flagged": report.flagged,
                        "predictor_iterations": report.predictor_iterations,
                    },
                )
            if on_output and config.output_every:
                if steps % config.output_every == 0:
                    on_output(self, steps)

        self.diagnostics.final_totals = self.totals()
        self.diagnostics.wall_seconds = clock.perf_counter() - started
        if on_output:
            on_output(self, steps)
        logger.info(
            f"✅ Finished '{self.case.name}' at t={self.state.time} in "
            f"{steps} steps ({self.diagnostics.rejected_steps} rejected)"
        )
        return self.solution
