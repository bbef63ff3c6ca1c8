"""Reference-element polynomial machinery on the unit triangle.

Modal functions come from modepy's orthonormal PKDO (Dubiner) family on the
biunit triangle, rescaled so that the constant mode equals one on the unit
triangle with vertices (0,0), (1,0) and (0,1). The reference mass matrix is
therefore ``0.5 * I`` and the first modal coefficient is the cell mean on an
undeformed cell.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import modepy
import numpy as np
from modepy.modes import grad_pkdo_2d, pkdo_2d
from numpy.polynomial.legendre import leggauss
from numpy.typing import NDArray

from src.aledg.numerics.subgrid import SubGrid, edge_matrices

FloatArray = NDArray[np.float64]

MAX_DEGREE = 3


def n_dof(degree: int, dims: int = 2) -> int:
    """Return the number of polynomials of total degree ``degree``."""
    return math.comb(degree + dims, dims)


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the unit triangle or on [0, 1].

    Attributes:
        points (FloatArray): Reference coordinates, (n, 2) on the triangle or
            (n,) on the interval.
        weights (FloatArray): Positive weights summing to the reference
            measure (1/2 on the triangle, 1 on the interval).
        degree (int): Total polynomial degree integrated exactly.
    """

    points: FloatArray
    weights: FloatArray
    degree: int


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Return a Xiao-Gimbutas rule on the unit triangle exact to ``degree``."""
    rule = modepy.XiaoGimbutasSimplexQuadrature(max(degree, 1), 2)
    points = 0.5 * (np.asarray(rule.nodes).T + 1.0)
    weights = 0.25 * np.asarray(rule.weights)
    return QuadratureRule(points=points, weights=weights, degree=degree)


@lru_cache(maxsize=None)
def interval_quadrature(n_points: int) -> QuadratureRule:
    """Return the Gauss-Legendre rule with ``n_points`` nodes on [0, 1]."""
    x, w = leggauss(n_points)
    return QuadratureRule(
        points=0.5 * (x + 1.0), weights=0.5 * w, degree=2 * n_points - 1
    )


def _mode_orders(degree: int) -> List[Tuple[int, int]]:
    return [(p - j, j) for p in range(degree + 1) for j in range(p + 1)]


@dataclass(frozen=True)
class PolynomialBasis:
    """Orthogonal modal basis of total degree N on the unit triangle."""

    degree: int
    orders: Tuple[Tuple[int, int], ...]

    @property
    def n_dof(self) -> int:
        return len(self.orders)

    def evaluate(self, points: FloatArray) -> FloatArray:
        """Evaluate all modes at unit-triangle points (n, 2) -> (n, n_dof)."""
        rs = 2.0 * np.asarray(points, dtype=float).T - 1.0
        values = np.empty((rs.shape[1], self.n_dof))
        values[:, 0] = 1.0
        for m, order in enumerate(self.orders[1:], start=1):
            values[:, m] = math.sqrt(2.0) * pkdo_2d(order, rs)
        return values

    def gradient(self, points: FloatArray) -> FloatArray:
        """Reference gradients of all modes, shape (n, n_dof, 2)."""
        rs = 2.0 * np.asarray(points, dtype=float).T - 1.0
        grads = np.zeros((rs.shape[1], self.n_dof, 2))
        for m, order in enumerate(self.orders[1:], start=1):
            dr, ds = grad_pkdo_2d(order, rs)
            grads[:, m, 0] = 2.0 * math.sqrt(2.0) * dr
            grads[:, m, 1] = 2.0 * math.sqrt(2.0) * ds
        return grads

    def mass_matrix(self) -> FloatArray:
        rule = triangle_quadrature(2 * self.degree + 1)
        phi = self.evaluate(rule.points)
        return np.einsum("q,qk,ql->kl", rule.weights, phi, phi)


@lru_cache(maxsize=None)
def build_basis(degree: int) -> PolynomialBasis:
    """Build the Dubiner basis of degree ``degree``.

    Args:
        degree (int): Polynomial degree N, 0 <= N <= 3.

    Returns:
        PolynomialBasis: Basis with (N+1)(N+2)/2 modes, constant mode first.

    Raises:
        ValueError: If the degree is not supported.
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"Unsupported polynomial degree {degree}")
    return PolynomialBasis(degree=degree, orders=tuple(_mode_orders(degree)))


def _lattice(degree: int) -> FloatArray:
    if degree == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    return np.array(
        [
            (i / degree, j / degree)
            for j in range(degree + 1)
            for i in range(degree + 1 - j)
        ]
    )


def _exponents(degree: int) -> FloatArray:
    return np.array(
        [
            (a, b, c)
            for p in range(degree + 1)
            for c in range(p + 1)
            for b in range(p - c + 1)
            for a in [p - b - c]
        ],
        dtype=float,
    )


@dataclass(frozen=True)
class SpaceTimeBasis:
    """Nodal (Lagrange) basis of total degree N on T_E x [0, 1].

    Nodes are stacked time slices: slice m sits at the m-th Gauss-Legendre
    point in tau and carries the equispaced triangle lattice of degree N - m,
    which makes the set unisolvent for polynomials of total degree N in
    (xi, eta, tau).
    """

    degree: int
    nodes: FloatArray
    exponents: FloatArray
    inverse_vandermonde: FloatArray

    @property
    def n_dof(self) -> int:
        return int(self.nodes.shape[0])

    def _monomials(self, points: FloatArray) -> FloatArray:
        pts = np.asarray(points, dtype=float)
        return np.prod(
            pts[:, np.newaxis, :] ** self.exponents[np.newaxis, :, :], axis=2
        )

    def evaluate(self, points: FloatArray) -> FloatArray:
        """Evaluate all theta_l at points (n, 3) -> (n, L)."""
        return self._monomials(points) @ self.inverse_vandermonde

    def gradient(self, points: FloatArray) -> FloatArray:
        """Gradients in (xi, eta, tau), shape (n, L, 3)."""
        pts = np.asarray(points, dtype=float)
        grads = np.empty((pts.shape[0], self.n_dof, 3))
        for axis in range(3):
            lowered = self.exponents.copy()
            factor = lowered[:, axis].copy()
            lowered[:, axis] = np.maximum(lowered[:, axis] - 1.0, 0.0)
            mono = factor * np.prod(
                pts[:, np.newaxis, :] ** lowered[np.newaxis, :, :], axis=2
            )
            grads[:, :, axis] = mono @ self.inverse_vandermonde
        return grads


@lru_cache(maxsize=None)
def build_spacetime_basis(degree: int) -> SpaceTimeBasis:
    """Build the nodal space-time basis of degree ``degree`` (1 <= N <= 3)."""
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"Unsupported space-time degree {degree}")
    taus = interval_quadrature(degree + 1).points
    slices = [
        np.column_stack(
            [_lattice(degree - m), np.full(n_dof(degree - m), taus[m])]
        )
        for m in range(degree + 1)
    ]
    nodes = np.vstack(slices)
    exponents = _exponents(degree)
    vandermonde = np.prod(
        nodes[:, np.newaxis, :] ** exponents[np.newaxis, :, :], axis=2
    )
    return SpaceTimeBasis(
        degree=degree,
        nodes=nodes,
        exponents=exponents,
        inverse_vandermonde=np.linalg.inv(vandermonde),
    )


@dataclass(frozen=True)
class SubcellProjectionOperators:
    """Precomputed maps between modal coefficients and subcell averages.

    Attributes:
        projection (FloatArray): Row s averages each mode over reference
            subcell s, (S, n_dof).
        reconstruction (FloatArray): Constrained least-squares inverse
            conserving the reference cell integral, (n_dof, S).
        reference_areas (FloatArray): Reference subcell areas, (S,).
        subcell_mass (FloatArray): Per-subcell reference mass matrices,
            (S, n_dof, n_dof).
    """

    projection: FloatArray
    reconstruction: FloatArray
    reference_areas: FloatArray
    subcell_mass: FloatArray


def subcell_quadrature(
    subgrid: SubGrid, degree: int
) -> Tuple[FloatArray, FloatArray]:
    """Composite rule over the reference subcells.

    Returns:
        Tuple[FloatArray, FloatArray]: Reference points (S, q, 2) and weights
        (S, q) such that summing over q integrates over each subcell in xi.
    """
    rule = triangle_quadrature(degree)
    corners = subgrid.nodes[subgrid.subcells]
    jac = edge_matrices(corners)
    points = corners[:, np.newaxis, 0, :] + np.einsum(
        "sij,qj->sqi", jac, rule.points
    )
    weights = np.abs(np.linalg.det(jac))[:, np.newaxis] * rule.weights
    return points, weights


def _kkt_solve(
    projection: FloatArray, weights: FloatArray, averages: FloatArray
) -> FloatArray:
    """Solve the conservative least-squares problem for batched weights.

    Args:
        projection (FloatArray): (S, n_dof) projection matrix.
        weights (FloatArray): Subcell measures, (C, S).
        averages (FloatArray): Subcell averages, (C, S, V).
    """
    n_cells = weights.shape[0]
    n = projection.shape[1]
    normal = projection.T @ projection
    constraint = weights @ projection
    kkt = np.zeros((n_cells, n + 1, n + 1))
    kkt[:, :n, :n] = normal
    kkt[:, :n, n] = constraint
    kkt[:, n, :n] = constraint
    rhs = np.concatenate(
        [
            np.einsum("sk,csv->ckv", projection, averages),
            np.einsum("cs,csv->cv", weights, averages)[:, np.newaxis, :],
        ],
        axis=1,
    )
    return np.linalg.solve(kkt, rhs)[:, :n, :]


def build_projection_operators(
    basis: PolynomialBasis, subgrid: SubGrid
) -> SubcellProjectionOperators:
    """Precompute projection, reconstruction and subcell mass matrices.

    Raises:
        ValueError: If the projection matrix is rank deficient.
    """
    points, weights = subcell_quadrature(subgrid, 2 * basis.degree + 1)
    n_sub, n_q = weights.shape
    phi = basis.evaluate(points.reshape(-1, 2)).reshape(n_sub, n_q, -1)
    areas = subgrid.reference_areas
    projection = np.einsum("sq,sqk->sk", weights, phi) / areas[:, np.newaxis]
    if np.linalg.matrix_rank(projection) < basis.n_dof:
        raise ValueError("Subcell projection matrix is rank deficient")

    n = basis.n_dof
    kkt = np.zeros((n + 1, n + 1))
    constraint = areas @ projection
    kkt[:n, :n] = projection.T @ projection
    kkt[:n, n] = constraint
    kkt[n, :n] = constraint
    rhs = np.vstack([projection.T, areas[np.newaxis, :]])
    reconstruction = np.linalg.solve(kkt, rhs)[:n, :]

    subcell_mass = np.einsum("sq,sqk,sql->skl", weights, phi, phi)
    return SubcellProjectionOperators(
        projection=projection,
        reconstruction=reconstruction,
        reference_areas=areas,
        subcell_mass=subcell_mass,
    )


def project_to_subcells(
    coeffs: FloatArray, ops: SubcellProjectionOperators
) -> FloatArray:
    """Subcell averages of modal data, (..., n_dof, V) -> (..., S, V).

    Averages computed in reference coordinates equal the physical ones
    because the subcell maps are affine.
    """
    return np.einsum("sk,...kv->...sv", ops.projection, coeffs)


def reconstruct_from_subcells(
    averages: FloatArray,
    ops: SubcellProjectionOperators,
    areas: Optional[FloatArray] = None,
) -> FloatArray:
    """Modal coefficients from subcell averages, (..., S, V) -> (..., n, V).

    Args:
        averages (FloatArray): Subcell averages.
        ops (SubcellProjectionOperators): Precomputed operators.
        areas (Optional[FloatArray]): Physical subcell areas (C, S). When
            given, the cell integral is conserved with these measures instead
            of the reference ones.

    Returns:
        FloatArray: Modal coefficients.
    """
    if areas is None:
        return np.einsum("ks,...sv->...kv", ops.reconstruction, averages)
    return _kkt_solve(ops.projection, np.atleast_2d(areas), averages)
