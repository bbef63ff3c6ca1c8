"""A posteriori subcell finite volume limiter.

Candidate cells that fail the admissibility or relaxed discrete maximum
principle checks are recomputed from their t^n subcell averages with a
second order TVD finite volume scheme on the moving subgrid. Fluxes on the
main faces of recomputed cells replace the DG fluxes at the same quadrature
points, and unlimited neighbors are re-solved with them so that the whole
update stays conservative.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.basis import (
    project_to_subcells,
    reconstruct_from_subcells,
)
from src.aledg.numerics.boundary import BoundaryConditions
from src.aledg.numerics.dg_scheme import (
    CorrectorResult,
    DGOperators,
    ale_rusanov_flux,
    boundary_ghosts,
    lateral_geometry,
)
from src.aledg.numerics.exceptions import InadmissibleStateError
from src.aledg.numerics.physics import (
    GasModel,
    admissible_mask,
    physical_flux,
)
from src.aledg.numerics.subgrid import signed_areas
from src.aledg.numerics.topology import SubGridTopology

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]

logger = logging.getLogger(__name__)

RDMP_ABSOLUTE = 1e-4
RDMP_RELATIVE = 1e-3
MAX_FIXUP_ROUNDS = 8


@dataclass(frozen=True)
class SubcellAdjacency:
    """Neighbors of every subcell across its three local edges.

    Attributes:
        neighbor (IntArray): Global subcell ``cell * S + s`` or -1 on the
            domain boundary, (C, S, 3).
        offset (FloatArray): Translation of the neighbor into the frame of
            the subcell's cell, (C, S, 3, 2).
    """

    neighbor: IntArray
    offset: FloatArray


@dataclass
class LimiterReport:
    """Outcome of limiting one step.

    Attributes:
        coeffs (FloatArray): Final coefficients at t^{n+1}.
        subcell_averages (FloatArray): Subcell averages at t^{n+1}.
        flags (BoolArray): Cells recomputed with the subcell scheme.
        first_order (bool): True if the first order fallback was needed.
    """

    coeffs: FloatArray
    subcell_averages: FloatArray
    flags: BoolArray
    first_order: bool = False

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flags))


def build_subcell_adjacency(topology: SubGridTopology) -> SubcellAdjacency:
    """Connect subcells across subcell edges and main faces."""
    sub = topology.subgrid
    n_cells, n_s = topology.n_cells, sub.n_subcells
    cells = np.arange(n_cells)
    neighbor = np.full((n_cells, n_s, 3), -1, dtype=np.int64)
    offset = np.zeros((n_cells, n_s, 3, 2))
    faces = topology.faces
    for s in range(n_s):
        for a in range(3):
            inner = sub.subcell_neighbors[s, a]
            if inner >= 0:
                neighbor[:, s, a] = cells * n_s + inner
                continue
            e, j = sub.subcell_boundary[s, a]
            f = topology.cell_faces[:, e]
            left = topology.cell_face_sides[:, e] == 0
            other = np.where(left, faces[f, 2], faces[f, 0])
            other_edge = np.where(left, faces[f, 3], faces[f, 1])
            valid = other >= 0
            other_sub = sub.subface_subcell[
                other_edge[valid], sub.n_sub - 1 - j
            ]
            neighbor[valid, s, a] = other[valid] * n_s + other_sub
            shift = topology.face_offsets[f]
            shift = np.where(left[:, None], shift, -shift)
            offset[valid, s, a] = shift[valid]
    return SubcellAdjacency(neighbor=neighbor, offset=offset)


def _neighborhood_extrema(
    topology: SubGridTopology, values: FloatArray
) -> Tuple[FloatArray, FloatArray]:
    starts = topology.cell_nbr_ptr[:-1]
    cell_min = values.min(axis=1)[topology.cell_nbr_idx]
    cell_max = values.max(axis=1)[topology.cell_nbr_idx]
    return (
        np.minimum.reduceat(cell_min, starts),
        np.maximum.reduceat(cell_max, starts),
    )


def detect(
    candidate_averages: FloatArray,
    old_averages: FloatArray,
    topology: SubGridTopology,
    model: GasModel,
    forced: Optional[BoolArray] = None,
) -> BoolArray:
    """Flag troubled cells of an unlimited candidate.

    A cell is flagged if a subcell average is not finite or has
    non-positive density or pressure, or if its subcell densities leave
    ``[min - delta, max + delta]`` of the t^n subcell densities in the
    vertex neighborhood, with ``delta = max(1e-4, 1e-3 (max - min))``.

    Args:
        candidate_averages (FloatArray): Candidate subcell averages,
            (C, S, 4).
        old_averages (FloatArray): Subcell averages at t^n, (C, S, 4).
        topology (SubGridTopology): Mesh connectivity.
        model (GasModel): Gas model.
        forced (Optional[BoolArray]): Cells flagged in advance.

    Returns:
        BoolArray: Troubled cell flags, (C,).
    """
    physical = ~np.all(admissible_mask(candidate_averages, model), axis=1)
    lo, hi = _neighborhood_extrema(topology, old_averages[..., 0])
    delta = np.maximum(RDMP_ABSOLUTE, RDMP_RELATIVE * (hi - lo))
    rho = candidate_averages[..., 0]
    with np.errstate(invalid="ignore"):
        numerical = np.any(
            (rho < (lo - delta)[:, None]) | (rho > (hi + delta)[:, None]),
            axis=1,
        )
    flags = physical | numerical
    if forced is not None:
        flags = flags | forced
    return np.asarray(flags)


def _gather_neighbors(
    values: FloatArray, adjacency: SubcellAdjacency
) -> Tuple[FloatArray, BoolArray]:
    flat = values.reshape((-1,) + values.shape[2:])
    valid = adjacency.neighbor >= 0
    return flat[np.where(valid, adjacency.neighbor, 0)], valid


def limited_gradients(
    averages: FloatArray,
    centroids: FloatArray,
    midpoints: FloatArray,
    adjacency: SubcellAdjacency,
) -> FloatArray:
    """Least-squares subcell gradients with Barth-Jespersen limiting.

    Args:
        averages (FloatArray): Subcell averages, (C, S, 4).
        centroids (FloatArray): Subcell centroids, (C, S, 2).
        midpoints (FloatArray): Subcell edge midpoints, (C, S, 3, 2).
        adjacency (SubcellAdjacency): Subcell neighbors.

    Returns:
        FloatArray: Limited gradients, (C, S, 4, 2).
    """
    nbr_avg, valid = _gather_neighbors(averages, adjacency)
    nbr_x, _ = _gather_neighbors(centroids, adjacency)
    mask = valid[..., None]
    dx = np.where(mask, nbr_x + adjacency.offset - centroids[:, :, None], 0.0)
    dv = np.where(mask, nbr_avg - averages[:, :, None], 0.0)
    grad = np.einsum("csai,csiv->csva", np.linalg.pinv(dx), dv)

    stencil = np.where(mask, nbr_avg, averages[:, :, None])
    v_max = np.maximum(stencil.max(axis=2), averages)[:, :, None]
    v_min = np.minimum(stencil.min(axis=2), averages)[:, :, None]
    own = averages[:, :, None]
    jump = np.einsum(
        "csva,csia->csiv", grad, midpoints - centroids[:, :, None]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            jump > 0.0,
            (v_max - own) / jump,
            np.where(jump < 0.0, (v_min - own) / jump, 1.0),
        )
    phi = np.clip(np.nan_to_num(ratio, nan=1.0), 0.0, 1.0).min(axis=2)
    return np.asarray(grad * phi[..., None])


@dataclass(frozen=True)
class SubcellReconstruction:
    """Piecewise linear space-time data on every subcell.

    The state of subcell s at ``(x, tau)`` is
    ``v_half + g . (x - x_c(tau)) + 2 (tau - 1/2)(v_half - v)`` with the
    centroid ``x_c`` moving linearly between both time levels.
    """

    averages: FloatArray
    half_step: FloatArray
    gradients: FloatArray
    centroid_old: FloatArray
    centroid_new: FloatArray

    def evaluate(
        self,
        cells: IntArray,
        subcells: IntArray,
        points: FloatArray,
        tau: FloatArray,
        shift: FloatArray,
    ) -> FloatArray:
        """States at points (B..., Q, 2) and times (Q,) -> (B..., Q, 4).

        ``shift`` (B..., 2) moves the subcell's frame into the frame of
        ``points``.
        """
        base = self.averages[cells, subcells]
        half = self.half_step[cells, subcells]
        grad = self.gradients[cells, subcells]
        tv = tau[:, None]
        centre = (
            (1.0 - tv) * self.centroid_old[cells, subcells][..., None, :]
            + tv * self.centroid_new[cells, subcells][..., None, :]
            + shift[..., None, :]
        )
        slope = np.einsum("...va,...qa->...qv", grad, points - centre)
        return np.asarray(
            half[..., None, :]
            + slope
            + 2.0 * (tv - 0.5) * (half - base)[..., None, :]
        )


def _centroids(cell_positions: FloatArray, ops: DGOperators) -> FloatArray:
    return np.asarray(cell_positions[:, ops.subgrid.subcells].mean(axis=2))


def reconstruct(
    ops: DGOperators,
    adjacency: SubcellAdjacency,
    averages: FloatArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    model: GasModel,
    second_order: bool = True,
) -> SubcellReconstruction:
    """MUSCL-Hancock reconstruction of all subcells.

    The half step advances the averages by ``dt / 2`` with the
    non-conservative ALE form ``-div F + w . grad v`` evaluated from the
    limited slopes; ``w`` is the centroid velocity. Without
    ``second_order`` the data is piecewise constant.
    """
    c_old = _centroids(pos_old, ops)
    c_new = _centroids(pos_new, ops)
    if not second_order:
        zero = np.zeros(averages.shape + (2,))
        return SubcellReconstruction(averages, averages, zero, c_old, c_new)
    corners = pos_old[:, ops.subgrid.subcells]
    mids = 0.5 * (corners + np.roll(corners, -1, axis=2))
    grad = limited_gradients(averages, c_old, mids, adjacency)
    face_states = averages[:, :, None] + np.einsum(
        "csva,csia->csiv", grad, mids - c_old[:, :, None]
    )
    edges = np.roll(corners, -1, axis=2) - corners
    normals = np.stack([edges[..., 1], -edges[..., 0]], axis=-1)
    slopes = np.broadcast_to(grad[:, :, None], face_states.shape + (2,))
    flux = physical_flux(face_states, slopes, model)
    area = signed_areas(corners)
    div = np.einsum("csiva,csia->csv", flux, normals) / area[..., None]
    advect = np.einsum("csva,csa->csv", grad, (c_new - c_old) / dt)
    half = averages + 0.5 * dt * (advect - div)
    return SubcellReconstruction(averages, half, grad, c_old, c_new)


def _penalty(distance: FloatArray) -> FloatArray:
    return np.asarray(1.0 / np.maximum(distance, np.finfo(float).tiny))


def _internal_fluxes(
    ops: DGOperators,
    recon: SubcellReconstruction,
    cells: IntArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    model: GasModel,
) -> FloatArray:
    """Net flux leaving every subcell through subcell edges, (n, S, 4)."""
    sub = ops.subgrid
    rows = sub.interior_edges
    s1, a1, s2 = rows[:, 0], rows[:, 1], rows[:, 2]
    tri = sub.subcells[s1]
    first = tri[np.arange(s1.size), a1]
    second = tri[np.arange(s1.size), (a1 + 1) % 3]
    half = np.array([0.5])
    normals, points = lateral_geometry(
        pos_old[cells][:, first],
        pos_old[cells][:, second],
        pos_new[cells][:, first],
        pos_new[cells][:, second],
        half,
        half,
        dt,
    )
    shape = normals.shape[:2]
    points = points.reshape(shape + (1, 2))
    normals = normals.reshape(shape + (1, 3))
    rows_c = np.broadcast_to(cells[:, None], shape)
    zero = np.zeros(shape + (2,))
    sc_l = np.broadcast_to(s1, shape)
    sc_r = np.broadcast_to(s2, shape)
    q_l = recon.evaluate(rows_c, sc_l, points, half, zero)
    q_r = recon.evaluate(rows_c, sc_r, points, half, zero)
    g_l = recon.gradients[rows_c, s1][:, :, None]
    g_r = recon.gradients[rows_c, s2][:, :, None]
    mid = points[:, :, 0]
    eta = _penalty(
        np.linalg.norm(recon.centroid_old[rows_c, s1] - mid, axis=-1)
        + np.linalg.norm(recon.centroid_old[rows_c, s2] - mid, axis=-1)
    )
    flux = ale_rusanov_flux(
        q_l, g_l, q_r, g_r, normals, model, eta[..., None]
    )[:, :, 0]
    incidence = np.zeros((sub.n_subcells, s1.size))
    incidence[s1, np.arange(s1.size)] = 1.0
    incidence[s2, np.arange(s1.size)] = -1.0
    return np.asarray(np.einsum("se,nev->nsv", incidence, flux))


def _main_face_fluxes(
    ops: DGOperators,
    topology: SubGridTopology,
    recon: SubcellReconstruction,
    faces: IntArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    conditions: BoundaryConditions,
) -> FloatArray:
    """Subcell fluxes at the DG quadrature points of main subfaces."""
    sub = ops.subgrid
    n_s, n_t = ops.face_s.size, ops.tau_points.size
    c_l, e_l = topology.faces[faces, 0], topology.faces[faces, 1]
    c_r, e_r = topology.faces[faces, 2], topology.faces[faces, 3]
    rows = c_l[:, None]
    first = sub.edge_nodes[e_l, :-1]
    second = sub.edge_nodes[e_l, 1:]
    normals, points = lateral_geometry(
        pos_old[rows, first],
        pos_old[rows, second],
        pos_new[rows, first],
        pos_new[rows, second],
        ops.face_s,
        ops.tau_points,
        dt,
    )
    shape = first.shape
    flat_pts = points.reshape(shape + (n_s * n_t, 2))
    taus = np.tile(ops.tau_points, n_s)
    s_l = sub.subface_subcell[e_l]
    cells_l = np.broadcast_to(rows, shape)
    q_l = recon.evaluate(
        cells_l, s_l, flat_pts, taus, np.zeros(shape + (2,))
    ).reshape(shape + (n_s, n_t, 4))
    g_l = recon.gradients[cells_l, s_l]
    mid = 0.5 * (pos_old[rows, first] + pos_old[rows, second])
    dist = np.linalg.norm(recon.centroid_old[cells_l, s_l] - mid, axis=-1)
    dist_total = 2.0 * dist

    q_r = np.empty_like(q_l)
    g_r = np.array(g_l, copy=True)
    inner = c_r >= 0
    if np.any(inner):
        shift = topology.face_offsets[faces[inner]]
        s_r = sub.subface_subcell[e_r[inner]][:, ::-1]
        cells_r = np.broadcast_to(c_r[inner][:, None], s_r.shape)
        shift_b = np.broadcast_to(shift[:, None], cells_r.shape + (2,))
        q_r[inner] = recon.evaluate(
            cells_r, s_r, flat_pts[inner], taus, shift_b
        ).reshape(cells_r.shape + (n_s, n_t, 4))
        g_r[inner] = recon.gradients[cells_r, s_r]
        centre_r = recon.centroid_old[cells_r, s_r] + shift_b
        dist_total[inner] = dist[inner] + np.linalg.norm(
            centre_r - mid[inner], axis=-1
        )
    outer = ~inner
    if np.any(outer):
        q_r[outer] = boundary_ghosts(
            q_l[outer],
            normals[outer],
            points[outer],
            topology.face_tags[faces[outer]],
            ops.tau_points,
            time,
            dt,
            conditions,
            model,
        )
    expand = (slice(None), slice(None), None, None)
    return ale_rusanov_flux(
        q_l,
        g_l[expand],
        q_r,
        g_r[expand],
        normals,
        model,
        _penalty(dist_total)[expand],
    )


def tvd_subcell_step(
    ops: DGOperators,
    topology: SubGridTopology,
    adjacency: SubcellAdjacency,
    flags: BoolArray,
    old_averages: FloatArray,
    face_flux: FloatArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    conditions: BoundaryConditions,
) -> Tuple[FloatArray, FloatArray, bool]:
    """Recompute flagged cells on their subgrid with finite volumes.

    Args:
        ops (DGOperators): Reference tables.
        topology (SubGridTopology): Mesh connectivity.
        adjacency (SubcellAdjacency): Subcell neighbors.
        flags (BoolArray): Troubled cells, (C,).
        old_averages (FloatArray): Subcell averages at t^n, (C, S, 4).
        face_flux (FloatArray): DG subface fluxes, (F, N_s, ns, nt, 4).
        pos_old (FloatArray): Cell subnode positions at t^n.
        pos_new (FloatArray): Cell subnode positions at t^{n+1}.
        dt (float): Time step.
        time (float): t^n.
        model (GasModel): Gas model.
        conditions (BoundaryConditions): Boundary data.

    Returns:
        Tuple[FloatArray, FloatArray, bool]: Subcell averages of the flagged
        cells at t^{n+1} (n, S, 4), the face fluxes with finite volume
        values on faces touching flagged cells and whether the first order
        fallback was used.

    Raises:
        InadmissibleStateError: If even the first order update is
            inadmissible.
    """
    sub = ops.subgrid
    cells = np.flatnonzero(flags)
    faces = topology.faces
    touched = flags[faces[:, 0]] | ((faces[:, 2] >= 0) & flags[faces[:, 2]])
    face_ids = np.flatnonzero(touched)
    area_old = signed_areas(pos_old[cells][:, sub.subcells])
    area_new = signed_areas(pos_new[cells][:, sub.subcells])

    for second_order in (True, False):
        recon = reconstruct(
            ops,
            adjacency,
            old_averages,
            pos_old,
            pos_new,
            dt,
            model,
            second_order,
        )
        flux = np.array(face_flux, copy=True)
        flux[face_ids] = _main_face_fluxes(
            ops,
            topology,
            recon,
            face_ids,
            pos_old,
            pos_new,
            dt,
            time,
            model,
            conditions,
        )
        total = _internal_fluxes(
            ops, recon, cells, pos_old, pos_new, dt, model
        )
        weighted = np.einsum(
            "q,t,fjqtv->fjv", ops.face_s_weights, ops.tau_weights, flux
        )
        for e in range(3):
            f = topology.cell_faces[cells, e]
            left = topology.cell_face_sides[cells, e] == 0
            contrib = np.where(
                left[:, None, None], weighted[f], -weighted[f][:, ::-1]
            )
            total[:, sub.subface_subcell[e]] += contrib
        updated = (
            old_averages[cells] * area_old[..., None] - total
        ) / area_new[..., None]
        if np.all(admissible_mask(updated, model)):
            return updated, flux, not second_order
        logger.warning(
            f"⚠️ Subcell scheme inadmissible at t={time:.6g}, "
            "retrying at first order"
        )
    raise InadmissibleStateError(
        f"First order subcell update inadmissible at t={time:.6g}"
    )


def gather(
    averages: FloatArray, ops: DGOperators, areas: FloatArray
) -> FloatArray:
    """Modal coefficients of limited cells from their subcell averages.

    The reconstruction conserves the cell integral measured with the
    physical subcell areas ``areas`` (n, S) at t^{n+1}.
    """
    return reconstruct_from_subcells(averages, ops.projection, areas)


def face_neighbors(topology: SubGridTopology, flags: BoolArray) -> IntArray:
    """Unflagged cells sharing a main face with a flagged cell."""
    faces = topology.faces
    inner = faces[:, 2] >= 0
    left, right = faces[inner, 0], faces[inner, 2]
    hit = np.concatenate(
        [left[flags[right] & ~flags[left]], right[flags[left] & ~flags[right]]]
    )
    return np.unique(hit)


def conservative_neighbor_fixup(
    result: CorrectorResult,
    ops: DGOperators,
    topology: SubGridTopology,
    flags: BoolArray,
    face_flux: FloatArray,
) -> Tuple[IntArray, FloatArray]:
    """Re-solve unflagged face neighbors with the replaced face fluxes.

    Returns:
        Tuple[IntArray, FloatArray]: The re-solved cells and their new
        coefficients.
    """
    cells = face_neighbors(topology, flags)
    if cells.size == 0:
        return cells, np.empty((0,) + result.coeffs.shape[1:])
    return cells, result.rebuild(ops, topology, cells, face_flux)


def limit(
    ops: DGOperators,
    topology: SubGridTopology,
    adjacency: SubcellAdjacency,
    result: CorrectorResult,
    old_averages: FloatArray,
    pos_old: FloatArray,
    pos_new: FloatArray,
    dt: float,
    time: float,
    model: GasModel,
    conditions: BoundaryConditions,
    forced: Optional[BoolArray] = None,
) -> LimiterReport:
    """Detect, recompute and repair one unlimited candidate.

    Cells re-solved by the neighbor fixup that turn inadmissible join the
    flagged set and the subcell step is repeated.

    Raises:
        InadmissibleStateError: If no admissible limited state is found.
    """
    sub_ops = ops.projection
    candidate_avg = project_to_subcells(result.coeffs, sub_ops)
    flags = detect(candidate_avg, old_averages, topology, model, forced)
    if not np.any(flags):
        return LimiterReport(result.coeffs, candidate_avg, flags)

    for _ in range(MAX_FIXUP_ROUNDS):
        limited, flux, first_order = tvd_subcell_step(
            ops,
            topology,
            adjacency,
            flags,
            old_averages,
            result.face_flux,
            pos_old,
            pos_new,
            dt,
            time,
            model,
            conditions,
        )
        cells = np.flatnonzero(flags)
        areas = signed_areas(pos_new[cells][:, ops.subgrid.subcells])
        coeffs = np.array(result.coeffs, copy=True)
        coeffs[cells] = gather(limited, ops, areas)
        fixed, fixed_coeffs = conservative_neighbor_fixup(
            result, ops, topology, flags, flux
        )
        coeffs[fixed] = fixed_coeffs
        averages = project_to_subcells(coeffs, sub_ops)
        bad = ~np.all(admissible_mask(averages[fixed], model), axis=1)
        if not np.any(bad):
            averages[cells] = limited
            logger.info(
                f"🧹 Limited {cells.size} cells at t={time:.6g}, "
                f"{fixed.size} neighbors re-solved"
            )
            return LimiterReport(coeffs, averages, flags, first_order)
        flags = flags.copy()
        flags[fixed[bad]] = True
    raise InadmissibleStateError(
        f"Neighbor fixup kept failing at t={time:.6g}"
    )
