"""Name-to-builder table of the benchmark problems."""

import logging
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from src.aledg.cases import (
    explosion,
    kidder,
    saltzman,
    sedov,
    taylor_green,
    vortex,
)
from src.aledg.cases.base import CaseBuilder, CaseDefinition
from src.aledg.numerics.dg_scheme import (
    DGSolution,
    build_dg_operators,
    l2_project,
)
from src.aledg.numerics.mesh import TriMesh, load_mesh
from src.aledg.numerics.physics import is_admissible
from src.aledg.numerics.topology import (
    build_topology,
    cell_subnode_positions,
    initial_positions,
)
from src.aledg.utils.config import SimulationConfig

logger = logging.getLogger(__name__)

CASES: Dict[str, CaseBuilder] = {
    "vortex": vortex.build,
    "explosion": explosion.build,
    "saltzman": saltzman.build,
    "saltzman_viscous": saltzman.build,
    "kidder": kidder.build,
    "sedov": sedov.build,
    "taylor_green": taylor_green.build,
}

CASE_DEFAULTS: Mapping[str, Mapping[str, Any]] = {
    "vortex": vortex.DEFAULTS,
    "explosion": explosion.DEFAULTS,
    "saltzman": saltzman.DEFAULTS,
    "saltzman_viscous": saltzman.VISCOUS_DEFAULTS,
    "kidder": kidder.DEFAULTS,
    "sedov": sedov.DEFAULTS,
    "taylor_green": taylor_green.DEFAULTS,
}


def init_case(
    name: str, config: SimulationConfig
) -> Tuple[TriMesh, DGSolution, CaseDefinition]:
    """Build the mesh, the projected initial solution and the case data.

    Args:
        name (str): Registered case name.
        config (SimulationConfig): Run configuration; ``config.mesh``
            replaces the generated mesh when set.

    Returns:
        Tuple[TriMesh, DGSolution, CaseDefinition]: Mesh, coefficients at
        t = 0 and case definition.

    Raises:
        ValueError: If the case is unknown or its initial data is not
            admissible on the mesh.
    """
    try:
        builder = CASES[name]
    except KeyError:
        known = ", ".join(sorted(CASES))
        raise ValueError(
            f"Unknown case '{name}', expected one of: {known}"
        ) from None
    mesh, case = builder(config)
    if config.mesh:
        mesh = load_mesh(config.mesh)
        logger.info(f"📦 Loaded mesh {config.mesh} ({mesh.n_cells} cells)")

    ops = build_dg_operators(config.order)
    topology = build_topology(mesh, ops.subgrid)
    positions = cell_subnode_positions(
        topology, initial_positions(mesh, topology)
    )
    samples = case.initial_state(positions.reshape(-1, 2))
    if not is_admissible(samples, case.model):
        raise ValueError(f"Initial data of '{name}' is not admissible")

    coeffs = l2_project(ops, positions, case.initial_state)
    # Constant mode is 1, so a constant state is its own mean coefficient.
    for cell, state in case.cell_overrides.items():
        coeffs[cell] = 0.0
        coeffs[cell, 0] = np.asarray(state, dtype=float)
    logger.info(
        f"✅ Initialized case '{name}' with N={config.order} on "
        f"{mesh.n_cells} cells"
    )
    return mesh, DGSolution(coeffs=coeffs, time=0.0), case
