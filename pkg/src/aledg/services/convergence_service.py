import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from src.aledg.cases.registry import init_case
from src.aledg.services.simulation_service import AleDgSolver
from src.aledg.utils.config import SimulationConfig
from src.aledg.utils.norms import convergence_rates, l2_error, mesh_size

FloatArray = NDArray[np.float64]

logger = logging.getLogger(__name__)

VARIABLES = ("rho", "rho_u", "rho_v", "rho_E")


@dataclass(frozen=True)
class ConvergenceRow:
    """Result of one mesh of a study.

    Attributes:
        resolution (Tuple[int, ...]): Generator resolution of the mesh.
        cells (int): Main cells.
        mesh_size (float): Largest circumcircle diameter at t_f.
        errors (FloatArray): L2 error per conserved variable.
        rate (float): Observed density order, NaN on the first row.
    """

    resolution: Tuple[int, ...]
    cells: int
    mesh_size: float
    errors: FloatArray
    rate: float


@dataclass(frozen=True)
class ConvergenceTable:
    case: str
    order: int
    rows: List[ConvergenceRow]

    @property
    def label(self) -> str:
        return f"{self.case}-N{self.order}"

    def to_text(self) -> str:
        """Aligned table with columns h, error and order."""
        lines = [f"{'h':>12} {'L2(rho)':>14} {'order':>8}"]
        for row in self.rows:
            rate = "-" if np.isnan(row.rate) else f"{row.rate:8.2f}"
            lines.append(
                f"{row.mesh_size:12.4e} {row.errors[0]:14.4e} {rate:>8}"
            )
        return "\n".join(lines)

    def to_csv(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        table = np.array(
            [[row.mesh_size, *row.errors, row.rate] for row in self.rows]
        )
        header = ",".join(("h",) + VARIABLES + ("order",))
        np.savetxt(
            target,
            table,
            fmt="%.10e",
            delimiter=",",
            header=header,
            comments="",
        )
        return target

    def as_records(self) -> List[Dict[str, Optional[float]]]:
        """Rows in the shape expected by ``ResultsDBService``."""
        return [
            {
                "mesh_size": row.mesh_size,
                "error": float(row.errors[0]),
                "rate": None if np.isnan(row.rate) else float(row.rate),
            }
            for row in self.rows
        ]


def run_for_error(
    config: SimulationConfig,
) -> Tuple[AleDgSolver, FloatArray]:
    """Run a case to ``config.final_time`` and measure its L2 error.

    Raises:
        ValueError: If the case has no exact solution.
    """
    mesh, solution, case = init_case(config.case, config)
    if case.exact_solution is None:
        raise ValueError(f"Case '{case.name}' has no exact solution")
    solver = AleDgSolver(mesh, solution, case, config)
    final = solver.run()
    errors = l2_error(
        solver.ops,
        final.coeffs,
        solver.cell_positions(),
        case.exact_solution,
        final.time,
    )
    return solver, errors


def convergence_table(
    config: SimulationConfig, resolutions: Sequence[Tuple[int, ...]]
) -> ConvergenceTable:
    """Run the case on a sequence of meshes and tabulate the errors.

    Args:
        config (SimulationConfig): Base configuration; its resolution is
            replaced row by row.
        resolutions (Sequence[Tuple[int, ...]]): Mesh resolutions, coarse
            to fine.

    Returns:
        ConvergenceTable: Mesh sizes on the final configuration, errors and
        observed orders.

    Raises:
        ValueError: If fewer than two meshes are given.
    """
    if len(resolutions) < 2:
        raise ValueError("A convergence study needs at least two meshes")
    sizes: List[float] = []
    errors: List[FloatArray] = []
    cells: List[int] = []
    for resolution in resolutions:
        run_config = dataclasses.replace(config, resolution=resolution)
        solver, error = run_for_error(run_config)
        vertices = solver.cell_positions()[:, solver.ops.subgrid.vertex_nodes]
        sizes.append(mesh_size(vertices))
        errors.append(error)
        cells.append(solver.topology.n_cells)
        logger.info(
            f"📈 {config.case} N={config.order} {resolution}: "
            f"h={sizes[-1]:.4e}, L2(rho)={error[0]:.4e}"
        )
    rates = convergence_rates(
        np.array(sizes), np.array([e[0] for e in errors])
    )
    rows = [
        ConvergenceRow(res, n, h, e, float(rate))
        for res, n, h, e, rate in zip(
            resolutions, cells, sizes, errors, rates
        )
    ]
    return ConvergenceTable(case=config.case, order=config.order, rows=rows)
