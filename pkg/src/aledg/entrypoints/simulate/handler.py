import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from src.aledg.cases.registry import CASE_DEFAULTS, init_case
from src.aledg.services.logger_service import get_logger
from src.aledg.services.output_service import (
    export_scatter_csv,
    export_vtk,
)
from src.aledg.services.results_db_service import ResultsDBService
from src.aledg.services.simulation_service import AleDgSolver
from src.aledg.utils.config import SimulationConfig, load_config
from src.aledg.utils.norms import l2_error

logger = get_logger("src.aledg")


def write_outputs(solver: AleDgSolver, step: int) -> None:
    """Write the VTK subcell file and the per-cell CSV of one step."""
    config = solver.config
    stem = Path(config.output_dir) / f"{config.case}_{step:06d}"
    model = solver.case.model
    export_vtk(
        stem.with_suffix(".vtk"),
        solver.subcell_corners(),
        solver.state.averages,
        solver.state.flags,
        model,
        solver.state.time,
    )
    vertices = solver.cell_positions()[:, solver.ops.subgrid.vertex_nodes]
    export_scatter_csv(
        stem.with_suffix(".csv"), vertices, solver.cell_means(), model
    )


def summarize(solver: AleDgSolver) -> Dict[str, Any]:
    """Run summary in the column layout of ``SimulationRun``."""
    diagnostics = solver.diagnostics
    error: Optional[float] = None
    exact = solver.case.exact_solution
    if exact is not None:
        errors = l2_error(
            solver.ops,
            solver.state.coeffs,
            solver.cell_positions(),
            exact,
            solver.state.time,
        )
        error = float(errors[0])
    return {
        "case": solver.case.name,
        "order": solver.config.order,
        "cells": solver.topology.n_cells,
        "cfl": solver.config.cfl,
        "final_time": solver.state.time,
        "steps": diagnostics.steps,
        "rejected_steps": diagnostics.rejected_steps,
        "flagged_max": diagnostics.max_flagged,
        "l2_density_error": error,
        "wall_seconds": diagnostics.wall_seconds,
    }


def persist_run(config: SimulationConfig, summary: Dict[str, Any]) -> int:
    db_service = ResultsDBService(config.results_db_url)
    db_service.create_schema()
    return db_service.add_run(summary).id


def handler(argv: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Run one simulation described by command-line arguments.

    Steps:
      1) Assemble the configuration
      2) Initialize the case and the solver
      3) Integrate to the final time, writing outputs at the cadence
      4) Optionally store the run summary

    Args:
        argv (Optional[Sequence[str]]): Command-line arguments.

    Returns:
        Dict[str, Any]: Response with ``statusCode`` (200, 400 on invalid
        input, 500 on solver failure) and JSON ``body``.
    """
    try:
        config = load_config(argv, CASE_DEFAULTS)
        mesh, solution, case = init_case(config.case, config)
        solver = AleDgSolver(mesh, solution, case, config)
        solver.run(on_output=write_outputs)

        summary = summarize(solver)
        body: Dict[str, Any] = dict(summary)
        if config.persist:
            body["run_id"] = persist_run(config, summary)
        diagnostics = solver.diagnostics
        body["max_predictor_iterations"] = (
            diagnostics.max_predictor_iterations
        )
        body["max_flagged_fraction"] = diagnostics.max_flagged_fraction
        body["initial_totals"] = diagnostics.initial_totals.tolist()
        body["final_totals"] = diagnostics.final_totals.tolist()

        return {"statusCode": 200, "body": json.dumps(body)}

    except ValueError as e:
        logger.exception(f"Invalid simulation input: {e}")
        return {"statusCode": 400, "body": json.dumps({"error": str(e)})}
    except Exception as e:
        logger.exception(f"Simulation failed: {e}")
        return {"statusCode": 500, "body": json.dumps({"error": str(e)})}


def main(argv: Optional[Sequence[str]] = None) -> int:
    response = handler(sys.argv[1:] if argv is None else argv)
    print(response["body"])
    return 0 if response["statusCode"] == 200 else 1


if __name__ == "__main__":
    sys.exit(main())
