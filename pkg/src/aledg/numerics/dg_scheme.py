"""One-step ALE ADER-DG corrector on space-time subvolumes.

Each main cell sweeps a space-time volume made of the subcell prisms that
join its subgrid at t^n and t^{n+1} linearly in time. The update

    M^{n+1} u^{n+1} = M^n u^n + V - S

uses mass matrices assembled subcell-wise on both geometries, a volume term
with the space-time flux ``(F - Q w)`` pulled back to reference coordinates
and a surface term built from ALE Rusanov fluxes on the lateral subfaces.
Interior subface fluxes are evaluated once and scattered with opposite signs
to both neighbors.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.basis import (
    PolynomialBasis,
    SubcellProjectionOperators,
    build_basis,
    build_projection_operators,
    interval_quadrature,
    subcell_quadrature,
)
from src.aledg.numerics.boundary import BoundaryConditions, ghost_states
from src.aledg.numerics.exceptions import (
    SingularMassMatrixError,
    SolverError,
)
from src.aledg.numerics.mesh import incircle_diameter
from src.aledg.numerics.physics import (
    GasModel,
    max_viscous_eigenvalue,
    physical_flux,
    sound_speed,
    velocity,
)
from src.aledg.numerics.predictor import (
    PredictorOperators,
    PredictorSolution,
    build_predictor_operators,
)
from src.aledg.numerics.subgrid import SubGrid, edge_matrices, signed_areas
from src.aledg.numerics.topology import SubGridTopology

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
InitialState = Callable[[FloatArray], FloatArray]


CELL_CHUNK = 256
FACE_CHUNK = 512
MAX_CFL = 0.5


@dataclass
class DGSolution:
    """Modal coefficients of every cell, (C, n_dof, 4), at ``time``."""

    coeffs: FloatArray
    time: float


@dataclass(frozen=True)
class SpaceTimeSubVolume:
    """Prism joining one subcell at t^n to its image at t^{n+1}.

    The six corners are interpolated by the linear functions
    ``(1 - tau)(1 - x1 - x2), (1 - tau) x1, (1 - tau) x2, tau (1 - x1 - x2),
    tau x1, tau x2`` of the local coordinates (x1, x2, tau).
    """

    corners: FloatArray

    @property
    def n_shape_functions(self) -> int:
        return int(self.corners.shape[0])

    @staticmethod
    def shape_functions(chi: FloatArray) -> FloatArray:
        chi = np.atleast_2d(chi)
        x1, x2, tau = chi[:, 0], chi[:, 1], chi[:, 2]
        lam = np.stack([1.0 - x1 - x2, x1, x2], axis=-1)
        return np.concatenate(
            [(1.0 - tau)[:, None] * lam, tau[:, None] * lam], axis=-1
        )

    def map(self, chi: FloatArray) -> FloatArray:
        """Physical points of local coordinates (n, 3) -> (n, 2)."""
        return self.shape_functions(chi) @ self.corners

    def jacobian_determinant(self, tau: float) -> float:
        """Spatial Jacobian determinant of the tau-slice."""
        old, new = self.corners[:3], self.corners[3:]
        slice_ = (1.0 - tau) * old + tau * new
        return float(2.0 * signed_areas(slice_))


@dataclass(frozen=True)
class DGOperators:
    """Reference quadrature tables of the corrector for one degree.

    Volume tables live on a composite rule over the reference subcells;
    face tables on tensor Gauss rules over every subface and tau.
    """

    degree: int
    basis: PolynomialBasis
    subgrid: SubGrid
    projection: SubcellProjectionOperators
    predictor: PredictorOperators
    tau_points: FloatArray
    tau_weights: FloatArray
    vol_points: FloatArray
    vol_weights: FloatArray
    vol_phi: FloatArray
    vol_dphi: FloatArray
    vol_theta: FloatArray
    vol_dtheta: FloatArray
    face_s: FloatArray
    face_s_weights: FloatArray
    face_phi: FloatArray
    face_theta: FloatArray
    face_dtheta: FloatArray
    ref_inverse: FloatArray
    ref_origin: FloatArray

    @property
    def n_sub(self) -> int:
        return self.subgrid.n_sub


def _spacetime_tables(
    pred: PredictorOperators, points: FloatArray, taus: FloatArray
) -> Tuple[FloatArray, FloatArray]:
    lead = points.shape[:-1]
    flat = points.reshape(-1, 2)
    n_pts, n_tau = flat.shape[0], taus.size
    st = np.column_stack(
        [np.repeat(flat, n_tau, axis=0), np.tile(taus, n_pts)]
    )
    theta = pred.spacetime.evaluate(st)
    dtheta = pred.spacetime.gradient(st)[:, :, :2]
    n_l = pred.n_nodes
    return (
        theta.reshape(lead + (n_tau, n_l)),
        dtheta.reshape(lead + (n_tau, n_l, 2)),
    )


@lru_cache(maxsize=None)
def build_dg_operators(degree: int) -> DGOperators:
    """Precompute all reference tables for degree N (1..3)."""
    basis = build_basis(degree)
    pred = build_predictor_operators(degree)
    subgrid = pred.subgrid
    projection = build_projection_operators(basis, subgrid)
    line = interval_quadrature(degree + 1)

    vol_points, vol_weights = subcell_quadrature(subgrid, 2 * degree + 1)
    n_s, n_q = vol_weights.shape
    flat = vol_points.reshape(-1, 2)
    vol_phi = basis.evaluate(flat).reshape(n_s, n_q, -1)
    vol_dphi = basis.gradient(flat).reshape(n_s, n_q, -1, 2)
    vol_theta, vol_dtheta = _spacetime_tables(pred, vol_points, line.points)

    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    n_sub = subgrid.n_sub
    face_points = np.empty((3, n_sub, line.points.size, 2))
    for e in range(3):
        start, end = corners[e], corners[(e + 1) % 3]
        frac = (np.arange(n_sub)[:, None] + line.points[None, :]) / n_sub
        face_points[e] = start + frac[..., None] * (end - start)
    face_phi = basis.evaluate(face_points.reshape(-1, 2)).reshape(
        face_points.shape[:-1] + (basis.n_dof,)
    )
    face_theta, face_dtheta = _spacetime_tables(
        pred, face_points, line.points
    )

    ref_corners = subgrid.nodes[subgrid.subcells]
    return DGOperators(
        degree=degree,
        basis=basis,
        subgrid=subgrid,
        projection=projection,
        predictor=pred,
        tau_points=line.points,
        tau_weights=line.weights,
        vol_points=vol_points,
        vol_weights=vol_weights,
        vol_phi=vol_phi,
        vol_dphi=vol_dphi,
        vol_theta=vol_theta,
        vol_dtheta=vol_dtheta,
        face_s=line.points,
        face_s_weights=line.weights,
        face_phi=face_phi,
        face_theta=face_theta,
        face_dtheta=face_dtheta,
        ref_inverse=np.linalg.inv(edge_matrices(ref_corners)),
        ref_origin=ref_corners[:, 0, :],
    )


def _chunks(n: int, size: int) -> Iterator[slice]:
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def subcell_jacobians(
    ops: DGOperators, cell_positions: FloatArray
) -> Tuple[FloatArray, FloatArray]:
    """Affine maps ``x = origin + J (xi - xi_0)`` of all subcells.

    Returns:
        Tuple[FloatArray, FloatArray]: Jacobians (C, S, 2, 2) and physical
        images of the first reference corner (C, S, 2).
    """
    corners = cell_positions[:, ops.subgrid.subcells]
    jac = np.einsum(
        "csij,sjk->csik", edge_matrices(corners), ops.ref_inverse
    )
    return jac, corners[:, :, 0, :]


def _adjugate(jac: FloatArray) -> FloatArray:
    adj = np.empty_like(jac)
    adj[..., 0, 0] = jac[..., 1, 1]
    adj[..., 1, 1] = jac[..., 0, 0]
    adj[..., 0, 1] = -jac[..., 0, 1]
    adj[..., 1, 0] = -jac[..., 1, 0]
    return adj


def mass_matrices(ops: DGOperators, cell_positions: FloatArray) -> FloatArray:
    """Physical mass matrices assembled subcell by subcell, (C, n, n)."""
    areas = signed_areas(cell_positions[:, ops.subgrid.subcells])
    ratio = areas / ops.projection.reference_areas
    return np.einsum("cs,skl->ckl", ratio, ops.projection.subcell_mass)


def solve_mass(mass: FloatArray, rhs: FloatArray) -> FloatArray:
    """Batched solve of ``M u = rhs``.

    Raises:
        SingularMassMatrixError: If a mass matrix is singular or not finite.
    """
    try:
        out = np.linalg.solve(mass, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularMassMatrixError("Singular mass matrix") from e
    if not np.all(np.isfinite(out)):
        raise SingularMassMatrixError("Non-finite mass matrix solve")
    return np.asarray(out)


def l2_project(
    ops: DGOperators, cell_positions: FloatArray, state: InitialState
) -> FloatArray:
    """L2 projection of a conserved-state field onto the DG space.

    Args:
        ops (DGOperators): Reference tables.
        cell_positions (FloatArray): Cell subnode positions, (C, K, 2).
        state (InitialState): Conserved state at points (n, 2) -> (n, 4).

    Returns:
        FloatArray: Modal coefficients, (C, n_dof, 4).
    """
    points, weights = subcell_quadrature(ops.subgrid, 2 * ops.degree + 2)
    n_s, n_q = weights.shape
    phi = ops.basis.evaluate(points.reshape(-1, 2)).reshape(n_s, n_q, -1)
    jac, origin = subcell_jacobians(ops, cell_positions)
    rel = points - ops.ref_origin[:, None, :]
    x = origin[:, :, None, :] + np.einsum("csij,sqj->csqi", jac, rel)
    values = np.asarray(state(x.reshape(-1, 2))).reshape(x.shape[:3] + (4,))
    ratio = np.linalg.det(jac)
    rhs = np.einsum("cs,sq,sqk,csqv->ckv", ratio, weights, phi, values)
    return solve_mass(mass_matrices(ops, cell_positions), rhs)


def ale_rusanov_flux(
    q_left: FloatArray,
    grad_left: Optional[FloatArray],
    q_right: FloatArray,
    grad_right: Optional[FloatArray],
    normal: FloatArray,
    model: GasModel,
    eta: FloatArray | float = 0.0,
) -> FloatArray:
    """Rusanov flux of the space-time flux ``(F, Q)`` through ``normal``.

    Args:
        q_left (FloatArray): Inner states, (..., 4).
        grad_left (Optional[FloatArray]): Inner gradients, (..., 4, 2).
        q_right (FloatArray): Outer states, (..., 4).
        grad_right (Optional[FloatArray]): Outer gradients, (..., 4, 2).
        normal (FloatArray): Space-time normals ``(n_x, n_y, n_t)`` scaled by
            the surface element, (..., 3).
        model (GasModel): Gas model.
        eta (FloatArray | float): Viscous penalty factor.

    Returns:
        FloatArray: ``0.5 (F_L + F_R).n - 0.5 (s + 2 eta s_nu |n_x|)
        (q_R - q_L)`` with ``s`` the largest ``|v.n_x + n_t| + c |n_x|``.
    """
    n_sp = normal[..., :2]
    n_t = normal[..., 2]
    area = np.linalg.norm(n_sp, axis=-1)
    zeros = np.zeros(q_left.shape + (2,))
    g_l = zeros if grad_left is None else grad_left
    g_r = zeros if grad_right is None else grad_right

    def space_time_flux(q: FloatArray, grad: FloatArray) -> FloatArray:
        flux = physical_flux(q, grad, model)
        return np.asarray(
            np.einsum("...vi,...i->...v", flux, n_sp)
            + q * n_t[..., np.newaxis]
        )

    def speed(q: FloatArray) -> FloatArray:
        vn = np.sum(velocity(q) * n_sp, axis=-1) + n_t
        return np.asarray(np.abs(vn) + sound_speed(q, model) * area)

    s_max = np.maximum(speed(q_left), speed(q_right))
    if model.viscous:
        s_nu = np.maximum(
            max_viscous_eigenvalue(q_left, model),
            max_viscous_eigenvalue(q_right, model),
        )
        s_max = s_max + 2.0 * np.asarray(eta) * s_nu * area
    central = 0.5 * (
        space_time_flux(q_left, g_l) + space_time_flux(q_right, g_r)
    )
    return np.asarray(
        central - 0.5 * s_max[..., np.newaxis] * (q_right - q_left)
    )


def viscous_penalty_eta(
    degree: int, distance_left: FloatArray, distance_right: FloatArray
) -> FloatArray:
    """Return ``(2N + 1) / h`` with ``h`` the sum of both distances."""
    return np.asarray(
        (2 * degree + 1) / (np.asarray(distance_left) + distance_right)
    )


def face_penalties(
    ops: DGOperators, topology: SubGridTopology, cell_positions: FloatArray
) -> FloatArray:
    """Viscous penalty of every main face from the t^n geometry, (F,)."""
    sub = ops.subgrid
    verts = cell_positions[:, sub.vertex_nodes]
    bary = verts.mean(axis=1)
    faces = topology.faces

    def distance(cells: IntArray, edges: IntArray) -> FloatArray:
        a = cell_positions[cells, sub.edge_nodes[edges, 0]]
        b = cell_positions[cells, sub.edge_nodes[edges, -1]]
        return np.asarray(
            np.linalg.norm(bary[cells] - 0.5 * (a + b), axis=-1)
        )

    d_l = distance(faces[:, 0], faces[:, 1])
    d_r = d_l.copy()
    inner = faces[:, 2] >= 0
    d_r[inner] = distance(faces[inner, 2], faces[inner, 3])
    return viscous_penalty_eta(ops.degree, d_l, d_r)


def compute_timestep(
    mean_states: FloatArray,
    cell_vertices: FloatArray,
    model: GasModel,
    cfl: float,
    degree: int,
) -> float:
    """Global CFL time step.

    ``dt = CFL / (2N + 1) * min_i h_i / (|lambda_i| + 2 lambda_nu_i (2N + 1)
    / h_i)`` with ``h_i`` the incircle diameter and ``lambda_i = |v| + c``
    from the cell mean state.

    Raises:
        ValueError: If ``cfl`` is outside (0, 0.5].
        SolverError: If the result is not positive and finite.
    """
    if not 0.0 < cfl <= MAX_CFL:
        raise ValueError(f"CFL must lie in (0, {MAX_CFL}], got {cfl}")
    h = incircle_diameter(cell_vertices)
    lam = np.linalg.norm(velocity(mean_states), axis=-1) + sound_speed(
        mean_states, model
    )
    denom = lam.copy()
    if model.viscous:
        nu = max_viscous_eigenvalue(mean_states, model)
        denom = denom + 2.0 * nu * (2 * degree + 1) / h
    with np.errstate(divide="ignore"):
        dt = float(cfl / (2 * degree + 1) * np.min(h / denom))
    if not np.isfinite(dt) or dt <= 0.0:
        raise SolverError(f"Non-positive time step {dt}")
    return dt


def lateral_geometry(
    a_old: FloatArray,
    b_old: FloatArray,
    a_new: FloatArray,
    b_new: FloatArray,
    s: FloatArray,
    tau: FloatArray,
    dt: float,
) -> Tuple[FloatArray, FloatArray]:
    """Normals and points of bilinear space-time subfaces.

    The subface from ``a`` to ``b`` sweeps
    ``X(s, tau) = (1 - tau) X^n(s) + tau X^{n+1}(s)``. Its normal
    ``(dt e_y, -dt e_x, e_x W_y - e_y W_x)`` with ``e = dX/ds`` and
    ``W = dX/dtau`` already carries the surface element.

    Args:
        a_old, b_old, a_new, b_new (FloatArray): Endpoints, (..., 2).
        s (FloatArray): Points along the subface, (ns,).
        tau (FloatArray): Time points, (nt,).
        dt (float): Time step.

    Returns:
        Tuple[FloatArray, FloatArray]: Normals (..., ns, nt, 3) and points
        (..., ns, nt, 2).
    """
    sv = s[:, None, None]
    tv = tau[None, :, None]
    a_o, b_o = a_old[..., None, None, :], b_old[..., None, None, :]
    a_n, b_n = a_new[..., None, None, :], b_new[..., None, None, :]
    x_old = (1.0 - sv) * a_o + sv * b_o
    x_new = (1.0 - sv) * a_n + sv * b_n
    points = (1.0 - tv) * x_old + tv * x_new
    e = (1.0 - tv) * (b_o - a_o) + tv * (b_n - a_n)
    w = x_new - x_old
    e, w = np.broadcast_arrays(e, w)
    normals = np.stack(
        [
            dt * e[..., 1],
            -dt * e[..., 0],
            e[..., 0] * w[..., 1] - e[..., 1] * w[..., 0],
        ],
        axis=-1,
    )
    return normals, np.asarray(points)


def boundary_ghosts(
    q_inner: FloatArray,
    normals: FloatArray,
    points: FloatArray,
    tags: IntArray,
    taus: FloatArray,
    time: float,
    dt: float,
    conditions: BoundaryConditions,
    model: GasModel,
) -> FloatArray:
    """Ghost states on boundary subfaces.

    Args:
        q_inner (FloatArray): Inner states, (f, ..., nt, 4).
        normals (FloatArray): Space-time normals, (f, ..., nt, 3).
        points (FloatArray): Physical points, (f, ..., nt, 2).
        tags (IntArray): ``BoundaryTag`` per face, (f,).
        taus (FloatArray): Time points of the last axis, (nt,).
        time (float): t^n.
        dt (float): Time step.
        conditions (BoundaryConditions): Boundary data.
        model (GasModel): Gas model.

    Returns:
        FloatArray: Outer states, shape of ``q_inner``.
    """
    area = np.linalg.norm(normals[..., :2], axis=-1)
    safe = np.where(area > 0.0, area, 1.0)
    unit = normals[..., :2] / safe[..., None]
    w_n = -normals[..., 2] / safe
    shape = normals.shape[:-1]
    tag_b = np.broadcast_to(
        tags.reshape((-1,) + (1,) * (len(shape) - 1)), shape
    )
    ghost = np.empty(shape + (4,))
    for t_i, tau in enumerate(taus):
        sel = (Ellipsis, t_i, slice(None))
        ghost[sel] = ghost_states(
            q_inner[sel].reshape(-1, 4),
            unit[sel].reshape(-1, 2),
            w_n[..., t_i].reshape(-1),
            tag_b[..., t_i].reshape(-1),
            points[sel].reshape(-1, 2),
            float(time + tau * dt),
            conditions,
            model,
        ).reshape(shape[:-1] + (4,))
    return ghost


def _face_gradients(
    ops: DGOperators,
    states: FloatArray,
    dtheta: FloatArray,
    jac_old: FloatArray,
    jac_new: FloatArray,
) -> FloatArray:
    ref = np.einsum("fjqtla,flv->fjqtva", dtheta, states)
    tau = ops.tau_points[None, None, :, None, None]
    jac = (1.0 - tau) * jac_old[:, :, None] + tau * jac_new[:, :, None]
    inv = np.linalg.inv(jac)
    return np.asarray(np.einsum("fjqtva,fjtai->fjqtvi", ref, inv))


def face_fluxes(
    ops: DGOperators,
    topology: SubGridTopology,
    prediction: PredictorSolution,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    conditions: BoundaryConditions,
) -> FloatArray:
    """Rusanov flux values at every subface quadrature point.

    Returns:
        FloatArray: Flux seen by the left cell of each face,
        (F, N_s, ns, nt, 4).
    """
    sub = ops.subgrid
    n_sub = sub.n_sub
    faces = topology.faces
    n_faces = faces.shape[0]
    n_s, n_t = ops.face_s.size, ops.tau_points.size
    result = np.empty((n_faces, n_sub, n_s, n_t, 4))
    eta = face_penalties(ops, topology, pos_old)
    jac_old, _ = subcell_jacobians(ops, pos_old)
    jac_new, _ = subcell_jacobians(ops, pos_new)

    for chunk in _chunks(n_faces, FACE_CHUNK):
        c_l, e_l = faces[chunk, 0], faces[chunk, 1]
        c_r, e_r = faces[chunk, 2], faces[chunk, 3]
        tags = topology.face_tags[chunk]
        first = sub.edge_nodes[e_l, :-1]
        second = sub.edge_nodes[e_l, 1:]
        rows = c_l[:, None]
        normals, points = lateral_geometry(
            pos_old[rows, first],
            pos_old[rows, second],
            pos_new[rows, first],
            pos_new[rows, second],
            ops.face_s,
            ops.tau_points,
            dt,
        )
        th_l = ops.face_theta[e_l]
        q_l = np.einsum("fjqtl,flv->fjqtv", th_l, prediction.states[c_l])
        inner = c_r >= 0
        q_r = np.empty_like(q_l)
        r_idx = np.flatnonzero(inner)
        th_r = ops.face_theta[e_r[inner]][:, ::-1, ::-1]
        q_r[inner] = np.einsum(
            "fjqtl,flv->fjqtv", th_r, prediction.states[c_r[inner]]
        )

        g_l: Optional[FloatArray] = None
        g_r: Optional[FloatArray] = None
        if model.viscous:
            sc_l = sub.subface_subcell[e_l]
            g_l = _face_gradients(
                ops,
                prediction.states[c_l],
                ops.face_dtheta[e_l],
                jac_old[rows, sc_l],
                jac_new[rows, sc_l],
            )
            g_r = np.array(g_l, copy=True)
            if r_idx.size:
                sc_r = sub.subface_subcell[e_r[inner]][:, ::-1]
                rr = c_r[inner][:, None]
                g_r[inner] = _face_gradients(
                    ops,
                    prediction.states[c_r[inner]],
                    ops.face_dtheta[e_r[inner]][:, ::-1, ::-1],
                    jac_old[rr, sc_r],
                    jac_new[rr, sc_r],
                )

        outer = ~inner
        if np.any(outer):
            q_r[outer] = boundary_ghosts(
                q_l[outer],
                normals[outer],
                points[outer],
                tags[outer],
                ops.tau_points,
                time,
                dt,
                conditions,
                model,
            )
        eta_b = eta[chunk][:, None, None, None]
        result[chunk] = ale_rusanov_flux(
            q_l, g_l, q_r, g_r, normals, model, eta_b
        )
    return result


def assemble_surface(
    ops: DGOperators,
    topology: SubGridTopology,
    flux: FloatArray,
    n_cells: int,
) -> FloatArray:
    """Scatter subface fluxes into per-cell surface terms, (C, n_dof, 4)."""
    faces = topology.faces
    weighted = np.einsum(
        "q,t,fjqtv->fjqv", ops.face_s_weights, ops.tau_weights, flux
    )
    surface = np.zeros((n_cells, ops.basis.n_dof, 4))
    left = np.einsum("fjqk,fjqv->fkv", ops.face_phi[faces[:, 1]], weighted)
    np.add.at(surface, faces[:, 0], left)
    inner = faces[:, 2] >= 0
    phi_r = ops.face_phi[faces[inner, 3]][:, ::-1, ::-1]
    right = np.einsum("fjqk,fjqv->fkv", phi_r, weighted[inner])
    np.add.at(surface, faces[inner, 2], -right)
    return surface


def volume_terms(
    ops: DGOperators,
    states: FloatArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    model: GasModel,
) -> FloatArray:
    """Space-time volume integral of ``grad(phi) . (F - Q w)``, (C, n, 4)."""
    n_cells = states.shape[0]
    out = np.empty((n_cells, ops.basis.n_dof, 4))
    tau = ops.tau_points[None, None, :, None, None]
    for chunk in _chunks(n_cells, CELL_CHUNK):
        jac_o, org_o = subcell_jacobians(ops, pos_old[chunk])
        jac_n, org_n = subcell_jacobians(ops, pos_new[chunk])
        rel = ops.vol_points - ops.ref_origin[:, None, :]
        w = (
            (org_n - org_o)[:, :, None, :]
            + np.einsum("csij,sqj->csqi", jac_n - jac_o, rel)
        ) / dt
        jac = (1.0 - tau) * jac_o[:, :, None] + tau * jac_n[:, :, None]
        adj = _adjugate(jac)
        q = np.einsum("sqtl,clv->csqtv", ops.vol_theta, states[chunk])
        grad = np.zeros(q.shape + (2,))
        if model.viscous:
            ref = np.einsum(
                "sqtla,clv->csqtva", ops.vol_dtheta, states[chunk]
            )
            inv = np.linalg.inv(jac)
            grad = np.einsum("csqtva,cstai->csqtvi", ref, inv)
        flux = physical_flux(q, grad, model)
        flux = flux - q[..., None] * w[:, :, :, None, None, :]
        pulled = np.einsum("cstai,csqtvi->csqtva", adj, flux)
        out[chunk] = dt * np.einsum(
            "sq,t,sqka,csqtva->ckv",
            ops.vol_weights,
            ops.tau_weights,
            ops.vol_dphi,
            pulled,
            optimize=True,
        )
    return out


@dataclass
class CorrectorResult:
    """Unlimited candidate and the pieces needed to rebuild it.

    Attributes:
        coeffs (FloatArray): Candidate coefficients at t^{n+1}.
        face_flux (FloatArray): Subface flux values, (F, N_s, ns, nt, 4).
        base_rhs (FloatArray): ``M^n u^n + V`` per cell.
        mass_new (FloatArray): Mass matrices at t^{n+1}.
    """

    coeffs: FloatArray
    face_flux: FloatArray
    base_rhs: FloatArray
    mass_new: FloatArray

    def rebuild(
        self,
        ops: DGOperators,
        topology: SubGridTopology,
        cells: IntArray,
        face_flux: Optional[FloatArray] = None,
    ) -> FloatArray:
        """Re-solve selected cells, optionally with replaced face fluxes."""
        flux = self.face_flux if face_flux is None else face_flux
        surface = assemble_surface(ops, topology, flux, self.coeffs.shape[0])
        return solve_mass(
            self.mass_new[cells], self.base_rhs[cells] - surface[cells]
        )


def corrector(
    ops: DGOperators,
    topology: SubGridTopology,
    coeffs: FloatArray,
    prediction: PredictorSolution,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    conditions: BoundaryConditions,
) -> CorrectorResult:
    """Unlimited one-step update of all cells.

    Args:
        ops (DGOperators): Reference tables.
        topology (SubGridTopology): Subgrid topology.
        coeffs (FloatArray): Coefficients at t^n, (C, n, 4).
        prediction (PredictorSolution): Local space-time predictors.
        pos_old (FloatArray): Cell subnode positions at t^n, (C, K, 2).
        pos_new (FloatArray): Cell subnode positions at t^{n+1}.
        dt (float): Time step.
        time (float): t^n.
        model (GasModel): Gas model.
        conditions (BoundaryConditions): Boundary data.

    Returns:
        CorrectorResult: Candidate solution with its building blocks.

    Raises:
        SingularMassMatrixError: If a new mass matrix is singular.
    """
    mass_old = mass_matrices(ops, pos_old)
    mass_new = mass_matrices(ops, pos_new)
    flux = face_fluxes(
        ops,
        topology,
        prediction,
        pos_old,
        pos_new,
        dt,
        time,
        model,
        conditions,
    )
    volume = volume_terms(ops, prediction.states, pos_old, pos_new, dt, model)
    base = np.einsum("ckl,clv->ckv", mass_old, coeffs) + volume
    surface = assemble_surface(ops, topology, flux, coeffs.shape[0])
    candidate = solve_mass(mass_new, base - surface)
    return CorrectorResult(
        coeffs=candidate, face_flux=flux, base_rhs=base, mass_new=mass_new
    )


def update_cell(
    result: CorrectorResult,
    ops: DGOperators,
    topology: SubGridTopology,
    cell: int,
) -> FloatArray:
    """Re-solve the unlimited update of one cell at t^{n+1}.

    Per-cell form of ``corrector``: the cell's mass system is solved again
    from its stored right-hand side and the shared face fluxes. The solver
    itself only uses the batched path; this one serves single-cell checks.
    """
    return np.asarray(result.rebuild(ops, topology, np.array([cell]))[0])


def check_gcl(
    ops: DGOperators,
    topology: SubGridTopology,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
) -> FloatArray:
    """Discrete geometric conservation residual of every cell, (C,).

    For each test function the closed space-time surface integral of
    ``phi n`` (lateral subfaces, top and bottom) is compared with the volume
    integral of the space-time gradient ``(grad phi, -w . grad phi)``, both
    with the scheme's own quadrature.
    """
    sub = ops.subgrid
    n_cells = pos_old.shape[0]
    n_dof = ops.basis.n_dof
    surface = np.zeros((n_cells, n_dof, 3))
    weights = np.outer(ops.face_s_weights, ops.tau_weights)
    for e in range(3):
        first, second = sub.edge_nodes[e, :-1], sub.edge_nodes[e, 1:]
        normals, _ = lateral_geometry(
            pos_old[:, first],
            pos_old[:, second],
            pos_new[:, first],
            pos_new[:, second],
            ops.face_s,
            ops.tau_points,
            dt,
        )
        surface += np.einsum(
            "qt,jqk,cjqtd->ckd", weights, ops.face_phi[e], normals
        )
    surface[:, :, 2] += mass_matrices(ops, pos_new)[:, :, 0]
    surface[:, :, 2] -= mass_matrices(ops, pos_old)[:, :, 0]

    jac_o, org_o = subcell_jacobians(ops, pos_old)
    jac_n, org_n = subcell_jacobians(ops, pos_new)
    rel = ops.vol_points - ops.ref_origin[:, None, :]
    w = (
        (org_n - org_o)[:, :, None, :]
        + np.einsum("csij,sqj->csqi", jac_n - jac_o, rel)
    ) / dt
    tau = ops.tau_points[None, None, :, None, None]
    adj = _adjugate((1.0 - tau) * jac_o[:, :, None] + tau * jac_n[:, :, None])
    grad_x = np.einsum("sqka,cstai->csqtki", ops.vol_dphi, adj)
    vol_weights = np.einsum("sq,t->sqt", ops.vol_weights, ops.tau_weights)
    volume = np.zeros((n_cells, n_dof, 3))
    volume[:, :, :2] = dt * np.einsum("sqt,csqtki->cki", vol_weights, grad_x)
    volume[:, :, 2] = -dt * np.einsum(
        "sqt,csqtki,csqi->ck", vol_weights, grad_x, w
    )
    if topology.n_cells != n_cells:
        raise ValueError("Positions do not match the topology")
    return np.asarray(np.abs(surface - volume).max(axis=(1, 2)))


def cell_mean_states(
    subcell_averages: FloatArray, subcell_area: FloatArray
) -> FloatArray:
    """Area-weighted cell means of subcell averages, (C, 4)."""
    total = subcell_area.sum(axis=1)
    return np.asarray(
        np.einsum("cs,csv->cv", subcell_area, subcell_averages)
        / total[:, None]
    )
