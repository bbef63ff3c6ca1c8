"""Error norms of DG solutions on the moving mesh."""

from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.basis import subcell_quadrature
from src.aledg.numerics.dg_scheme import DGOperators, subcell_jacobians
from src.aledg.numerics.mesh import circumcircle_diameter

FloatArray = NDArray[np.float64]
ExactSolution = Callable[[FloatArray, float], FloatArray]


def l2_error(
    ops: DGOperators,
    coeffs: FloatArray,
    cell_positions: FloatArray,
    exact: Optional[ExactSolution],
    time: float,
) -> FloatArray:
    """Continuous L2 norm of ``exact - u_h`` per conserved variable.

    The integral is taken with a composite rule of degree 2N + 2 over the
    subcells of the final mesh configuration.

    Args:
        ops (DGOperators): Reference tables.
        coeffs (FloatArray): Modal coefficients, (C, n_dof, 4).
        cell_positions (FloatArray): Cell subnode positions, (C, K, 2).
        exact (Optional[ExactSolution]): Conserved exact state at points
            (n, 2) and time t.
        time (float): Time of the exact solution.

    Returns:
        FloatArray: Error per variable, (4,).

    Raises:
        ValueError: If no exact solution is available.
    """
    if exact is None:
        raise ValueError("Case has no exact solution")
    points, weights = subcell_quadrature(ops.subgrid, 2 * ops.degree + 2)
    n_s, n_q = weights.shape
    phi = ops.basis.evaluate(points.reshape(-1, 2)).reshape(n_s, n_q, -1)
    jac, origin = subcell_jacobians(ops, cell_positions)
    rel = points - ops.ref_origin[:, None, :]
    x = origin[:, :, None, :] + np.einsum("csij,sqj->csqi", jac, rel)
    reference = np.asarray(exact(x.reshape(-1, 2), time)).reshape(
        x.shape[:3] + (4,)
    )
    numerical = np.einsum("sqk,ckv->csqv", phi, coeffs)
    det = np.linalg.det(jac)
    squared = np.einsum(
        "cs,sq,csqv->v", det, weights, (reference - numerical) ** 2
    )
    return np.asarray(np.sqrt(squared))


def mesh_size(cell_vertices: FloatArray) -> float:
    """Largest circumcircle diameter of the main cells."""
    return float(np.max(circumcircle_diameter(cell_vertices)))


def convergence_rates(sizes: FloatArray, errors: FloatArray) -> FloatArray:
    """Observed orders between consecutive rows, first entry NaN.

    ``rate_i = log(e_{i-1} / e_i) / log(h_{i-1} / h_i)``.
    """
    h = np.asarray(sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    rates = np.full(h.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return rates
