"""Nodal solver and mesh update.

One velocity is assigned to every global subnode: vertex subnodes average
the states of their effective neighborhood, face subnodes take the velocity
of the HLL intermediate state between the two adjacent cells and internal
subnodes solve a discrete Laplace problem inside their cell. The Lagrangian
positions are then rezoned for subcell quality and blended back with a
deformation dependent relaxation factor.

``effective_neighborhood``, ``node_state`` and ``vertex_node_velocity``
spell out the vertex rule for a single subnode. ``compute_node_velocities``
applies the same rule to every subnode at once and is what the solver runs.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.boundary import (
    BoundaryConditions,
    ghost_states,
    wall_normal_speed,
)
from src.aledg.numerics.exceptions import (
    InadmissibleStateError,
    TangledMeshError,
)
from src.aledg.numerics.mesh import BoundaryTag
from src.aledg.numerics.physics import (
    GasModel,
    admissible_mask,
    euler_flux,
    sound_speed,
    velocity,
)
from src.aledg.numerics.predictor import MotionMode, VelocityField
from src.aledg.numerics.subgrid import SubGrid, SubnodeKind, signed_areas
from src.aledg.numerics.topology import (
    SubGridTopology,
    cell_subnode_positions,
    subcell_areas,
)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]

logger = logging.getLogger(__name__)

HLL_DEGENERATE = 1e-14
DEFORMATION_SCALE = 0.1
REZONE_SWEEPS = 3
LINE_SEARCH_STEPS = 12
PARALLEL_NORMALS = 1e-8

EQUILATERAL = np.array([[1.0, 0.5], [0.0, 0.5 * np.sqrt(3.0)]])
EQUILATERAL_INV = np.linalg.inv(EQUILATERAL)
CORNER_ROW = np.ones(2) @ EQUILATERAL_INV


class RelaxationMode(str, Enum):
    """Blend between Lagrangian and rezoned positions."""

    DEFORMATION = "deformation"
    CONSTANT = "constant"
    LAGRANGIAN = "lagrangian"


class Contributor(NamedTuple):
    """A main cell (``subcell == -1``) or one of its subcells."""

    cell: int
    subcell: int = -1


@dataclass(frozen=True)
class NodalVelocityField:
    """One velocity per global subnode, (G, 2)."""

    velocities: FloatArray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.velocities)):
            raise InadmissibleStateError("Non-finite nodal velocity")


@dataclass(frozen=True)
class MotionReport:
    """Positions produced by one mesh update.

    Attributes:
        lagrangian (FloatArray): X^Lag per global subnode.
        rezoned (FloatArray): X^Rez per global subnode.
        omega (FloatArray): Blend factor per global subnode, in [0, 1].
        positions (FloatArray): Final X^{n+1}.
        velocities (NodalVelocityField): Nodal solver output.
        min_area_lagrangian (FloatArray): Smallest subcell area per cell at
            the Lagrangian positions.
        min_area_final (FloatArray): Smallest subcell area per cell at
            X^{n+1}.
    """

    lagrangian: FloatArray
    rezoned: FloatArray
    omega: FloatArray
    positions: FloatArray
    velocities: NodalVelocityField
    min_area_lagrangian: FloatArray
    min_area_final: FloatArray


def incidence_matrix(subgrid: SubGrid) -> FloatArray:
    """``I[k, s] = 1`` when subnode k is a corner of subcell s."""
    inc = np.zeros((subgrid.n_nodes, subgrid.n_subcells))
    for a in range(3):
        inc[subgrid.subcells[:, a], np.arange(subgrid.n_subcells)] = 1.0
    return inc


def effective_neighborhood(
    topology: SubGridTopology, node: int, flags: BoolArray
) -> List[Contributor]:
    """Contributors of a global subnode.

    Unflagged cells holding the node contribute as a whole, flagged cells
    contribute each of their subcells incident to the node.
    """
    cells, locals_ = topology.node_neighborhood(node)
    subgrid = topology.subgrid
    out: List[Contributor] = []
    for c, k in zip(cells.tolist(), locals_.tolist()):
        if flags[c]:
            out += [Contributor(c, int(s)) for s in subgrid.node_subcells[k]]
        else:
            out.append(Contributor(c))
    return out


def node_state(
    topology: SubGridTopology,
    node: int,
    contributor: Contributor,
    node_states: FloatArray,
    subcell_averages: FloatArray,
    model: GasModel,
) -> FloatArray:
    """State a contributor assigns to a global subnode.

    Args:
        topology (SubGridTopology): Subgrid topology.
        node (int): Global subnode.
        contributor (Contributor): Cell or subcell.
        node_states (FloatArray): Time-integrated predictor states at the
            cell subnodes, (C, K, 4).
        subcell_averages (FloatArray): Subcell averages at t^n, (C, S, 4).
        model (GasModel): Gas model.

    Raises:
        InadmissibleStateError: If the contributed state is not admissible.
    """
    if contributor.subcell >= 0:
        state = subcell_averages[contributor.cell, contributor.subcell]
    else:
        cells, locals_ = topology.node_neighborhood(node)
        k = int(locals_[np.flatnonzero(cells == contributor.cell)[0]])
        state = node_states[contributor.cell, k]
    if not np.all(admissible_mask(state, model)):
        raise InadmissibleStateError(
            f"Inadmissible contribution to subnode {node}"
        )
    return np.asarray(state)


def vertex_node_velocity(states: FloatArray) -> FloatArray:
    """Velocity of the arithmetic mean of contributed conserved states.

    Raises:
        ValueError: If no state is given.
    """
    states = np.asarray(states, dtype=float).reshape(-1, 4)
    if states.shape[0] == 0:
        raise ValueError("Empty neighborhood")
    return velocity(states.mean(axis=0))


def hll_state(
    q_left: FloatArray,
    q_right: FloatArray,
    normal: FloatArray,
    model: GasModel,
) -> FloatArray:
    """HLL intermediate state across unit normals, batched over (..., 4).

    Signal speeds are ``s_L = min(0, v_L.n - c_L, v_R.n - c_R)`` and
    ``s_R = max(0, v_L.n + c_L, v_R.n + c_R)``. A vanishing wave fan
    returns the arithmetic mean.
    """
    q_left = np.asarray(q_left, dtype=float)
    q_right = np.asarray(q_right, dtype=float)
    normal = np.asarray(normal, dtype=float)
    un_l = np.sum(velocity(q_left) * normal, axis=-1)
    un_r = np.sum(velocity(q_right) * normal, axis=-1)
    c_l, c_r = sound_speed(q_left, model), sound_speed(q_right, model)
    s_l = np.minimum(0.0, np.minimum(un_l - c_l, un_r - c_r))
    s_r = np.maximum(0.0, np.maximum(un_l + c_l, un_r + c_r))
    f_l = np.einsum(
        "...vi,...i->...v", euler_flux(q_left, model, strict=False), normal
    )
    f_r = np.einsum(
        "...vi,...i->...v", euler_flux(q_right, model, strict=False), normal
    )
    width = s_r - s_l
    degenerate = width < HLL_DEGENERATE
    safe = np.where(degenerate, 1.0, width)[..., np.newaxis]
    star = (
        s_r[..., np.newaxis] * q_right
        - s_l[..., np.newaxis] * q_left
        + f_l
        - f_r
    ) / safe
    mean = 0.5 * (q_left + q_right)
    return np.where(degenerate[..., np.newaxis], mean, star)


def face_node_velocity(
    q_left: FloatArray,
    q_right: FloatArray,
    normal: FloatArray,
    model: GasModel,
) -> FloatArray:
    """Velocity of the HLL state between two contributions."""
    return velocity(hll_state(q_left, q_right, normal, model))


def p1_stiffness(cell_positions: FloatArray, subgrid: SubGrid) -> FloatArray:
    """Linear finite element stiffness on every cell subgrid, (C, K, K)."""
    corners = cell_positions[:, subgrid.subcells]
    area = signed_areas(corners)
    grads = np.empty(corners.shape)
    for a in range(3):
        p1 = corners[:, :, (a + 1) % 3, :]
        p2 = corners[:, :, (a + 2) % 3, :]
        grads[:, :, a, 0] = p1[..., 1] - p2[..., 1]
        grads[:, :, a, 1] = p2[..., 0] - p1[..., 0]
    grads /= (2.0 * area)[:, :, np.newaxis, np.newaxis]
    local = area[:, :, np.newaxis, np.newaxis] * np.einsum(
        "csai,csbi->csab", grads, grads
    )
    n_cells = cell_positions.shape[0]
    stiffness = np.zeros((n_cells, subgrid.n_nodes, subgrid.n_nodes))
    for a in range(3):
        for b in range(3):
            np.add.at(
                stiffness,
                (slice(None), subgrid.subcells[:, a], subgrid.subcells[:, b]),
                local[:, :, a, b],
            )
    return stiffness


def internal_node_velocities(
    cell_positions: FloatArray,
    perimeter_velocities: FloatArray,
    subgrid: SubGrid,
) -> FloatArray:
    """Harmonic extension of perimeter velocities into every cell.

    Args:
        cell_positions (FloatArray): Cell subnode positions at t^n,
            (C, K, 2).
        perimeter_velocities (FloatArray): Velocities at
            ``subgrid.perimeter_nodes``, (C, P, 2).
        subgrid (SubGrid): Reference subgrid.

    Returns:
        FloatArray: Velocities at ``subgrid.internal_nodes``, (C, I, 2).

    Raises:
        TangledMeshError: If a cell stiffness block is singular.
    """
    internal, perimeter = subgrid.internal_nodes, subgrid.perimeter_nodes
    if internal.size == 0:
        return np.zeros((cell_positions.shape[0], 0, 2))
    stiffness = p1_stiffness(cell_positions, subgrid)
    k_ii = stiffness[:, internal][:, :, internal]
    k_ib = stiffness[:, internal][:, :, perimeter]
    rhs = -np.einsum("cip,cpj->cij", k_ib, perimeter_velocities)
    try:
        return np.asarray(np.linalg.solve(k_ii, rhs))
    except np.linalg.LinAlgError as e:
        raise TangledMeshError("Singular subgrid stiffness") from e


def lagrangian_positions(
    positions: FloatArray, velocities: FloatArray, dt: float
) -> FloatArray:
    """Return ``X + dt V``."""
    return np.asarray(positions + dt * velocities)


def _contributions(
    topology: SubGridTopology,
    node_states: FloatArray,
    subcell_averages: FloatArray,
    flags: BoolArray,
) -> Tuple[FloatArray, FloatArray]:
    inc = incidence_matrix(topology.subgrid)
    sums = np.array(node_states, copy=True)
    counts = np.ones(node_states.shape[:2])
    if np.any(flags):
        sums[flags] = np.einsum("ks,csv->ckv", inc, subcell_averages[flags])
        counts[flags] = inc.sum(axis=1)
    return sums, counts


def _edge_normals(
    cell_positions: FloatArray, cells: IntArray, edges: IntArray, sub: SubGrid
) -> FloatArray:
    """Outward unit normals of main edges from their end vertices."""
    a = cell_positions[cells, sub.edge_nodes[edges, 0]]
    b = cell_positions[cells, sub.edge_nodes[edges, -1]]
    t = b - a
    n = np.column_stack([t[:, 1], -t[:, 0]])
    return np.asarray(n / np.linalg.norm(n, axis=1)[:, np.newaxis])


def _face_node_velocities(
    topology: SubGridTopology,
    cell_positions: FloatArray,
    sums: FloatArray,
    counts: FloatArray,
    time: float,
    conditions: BoundaryConditions,
    model: GasModel,
) -> Tuple[IntArray, FloatArray]:
    sub = topology.subgrid
    n_sub = sub.n_sub
    faces = topology.faces
    j = np.arange(1, n_sub)
    c_l = np.repeat(faces[:, 0], n_sub - 1)
    e_l = np.repeat(faces[:, 1], n_sub - 1)
    c_r = np.repeat(faces[:, 2], n_sub - 1)
    e_r = np.repeat(faces[:, 3], n_sub - 1)
    tags = np.repeat(topology.face_tags, n_sub - 1)
    jj = np.tile(j, faces.shape[0])

    k_l = sub.edge_nodes[e_l, jj]
    nodes = topology.l2g[c_l, k_l]
    q_l = sums[c_l, k_l] / counts[c_l, k_l][:, np.newaxis]
    tangent = (
        cell_positions[c_l, sub.edge_nodes[e_l, jj + 1]]
        - cell_positions[c_l, sub.edge_nodes[e_l, jj - 1]]
    )
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    normal /= np.linalg.norm(normal, axis=1)[:, np.newaxis]

    q_r = np.empty_like(q_l)
    inner = c_r >= 0
    k_r = sub.edge_nodes[e_r[inner], n_sub - jj[inner]]
    q_r[inner] = (
        sums[c_r[inner], k_r] / counts[c_r[inner], k_r][:, np.newaxis]
    )
    outer = ~inner
    if np.any(outer):
        q_r[outer] = ghost_states(
            q_l[outer],
            normal[outer],
            wall_normal_speed(tags[outer], normal[outer], conditions),
            tags[outer],
            cell_positions[c_l[outer], k_l[outer]],
            time,
            conditions,
            model,
        )
    if not np.all(admissible_mask(q_l, model) & admissible_mask(q_r, model)):
        raise InadmissibleStateError("Inadmissible state at a face subnode")
    return nodes, face_node_velocity(q_l, q_r, normal, model)


def _apply_wall_constraints(
    topology: SubGridTopology,
    cell_positions: FloatArray,
    velocities: FloatArray,
    conditions: BoundaryConditions,
) -> None:
    faces = topology.faces
    wall_faces = np.flatnonzero(
        (topology.face_tags == BoundaryTag.SLIP_WALL)
        | (topology.face_tags == BoundaryTag.MOVING_WALL)
    )
    if wall_faces.size == 0:
        return
    normals = _edge_normals(
        cell_positions,
        faces[wall_faces, 0],
        faces[wall_faces, 1],
        topology.subgrid,
    )
    speed = wall_normal_speed(
        topology.face_tags[wall_faces], normals, conditions
    )
    lookup = {int(f): i for i, f in enumerate(wall_faces)}
    for g, node_faces in topology.node_boundary_faces.items():
        rows = [lookup[f] for f in node_faces if f in lookup]
        if not rows:
            continue
        n1, w1 = normals[rows[0]], speed[rows[0]]
        second = next(
            (
                r
                for r in rows[1:]
                if abs(np.cross(n1, normals[r])) > PARALLEL_NORMALS
            ),
            None,
        )
        v = velocities[g]
        if second is None:
            velocities[g] = v - (v @ n1 - w1) * n1
        else:
            mat = np.vstack([n1, normals[second]])
            velocities[g] = np.linalg.solve(mat, [w1, speed[second]])


def compute_node_velocities(
    topology: SubGridTopology,
    positions: FloatArray,
    node_states: FloatArray,
    subcell_averages: FloatArray,
    flags: BoolArray,
    time: float,
    conditions: BoundaryConditions,
    model: GasModel,
) -> NodalVelocityField:
    """Run the nodal solver for Lagrangian motion.

    Args:
        topology (SubGridTopology): Subgrid topology.
        positions (FloatArray): Global subnode positions at t^n.
        node_states (FloatArray): Time-integrated predictor states at the
            cell subnodes, (C, K, 4).
        subcell_averages (FloatArray): Subcell averages at t^n, (C, S, 4).
        flags (BoolArray): Limiter flags of the previous step.
        time (float): Time used for Dirichlet ghost states.
        conditions (BoundaryConditions): Boundary data.
        model (GasModel): Gas model.

    Returns:
        NodalVelocityField: One velocity per global subnode.
    """
    sub = topology.subgrid
    cell_pos = cell_subnode_positions(topology, positions)
    sums, counts = _contributions(
        topology, node_states, subcell_averages, flags
    )
    n_nodes = topology.n_nodes
    velocities = np.zeros((n_nodes, 2))

    vertex_local = sub.vertex_nodes
    g_sum = np.zeros((n_nodes, 4))
    g_count = np.zeros(n_nodes)
    np.add.at(g_sum, topology.l2g[:, vertex_local], sums[:, vertex_local])
    np.add.at(g_count, topology.l2g[:, vertex_local], counts[:, vertex_local])
    vertices = np.flatnonzero(topology.kinds == SubnodeKind.VERTEX)
    mean = g_sum[vertices] / g_count[vertices, np.newaxis]
    if not np.all(admissible_mask(mean, model)):
        raise InadmissibleStateError("Inadmissible mean state at a vertex")
    velocities[vertices] = velocity(mean)

    nodes, face_velocity = _face_node_velocities(
        topology, cell_pos, sums, counts, time, conditions, model
    )
    velocities[nodes] = face_velocity
    _apply_wall_constraints(topology, cell_pos, velocities, conditions)

    perimeter = sub.perimeter_nodes
    inner = internal_node_velocities(
        cell_pos, velocities[topology.l2g[:, perimeter]], sub
    )
    velocities[topology.l2g[:, sub.internal_nodes]] = inner
    return NodalVelocityField(velocities)


def _corner_frames(
    cell_pos: FloatArray,
    subgrid: SubGrid,
    cells: IntArray,
    subcells: IntArray,
    corners: IntArray,
) -> Tuple[FloatArray, FloatArray]:
    tri = subgrid.subcells[subcells]
    rows = np.arange(tri.shape[0])
    a = tri[rows, corners]
    b = tri[rows, (corners + 1) % 3]
    c = tri[rows, (corners + 2) % 3]
    x_a = cell_pos[cells, a]
    edges = np.stack(
        [cell_pos[cells, b] - x_a, cell_pos[cells, c] - x_a], axis=-1
    )
    return x_a, edges


def _quality(edges: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Return ``(kappa^2, area)`` of subcells with edge matrices (n, 2, 2)."""
    jac = edges @ EQUILATERAL_INV
    q = np.sum(jac**2, axis=(1, 2))
    d = np.linalg.det(jac)
    area = 0.5 * np.linalg.det(edges)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(d > 0.0, q**2 / d**2, np.inf)
    return f, area


def _quality_derivatives(
    edges: FloatArray,
) -> Tuple[FloatArray, FloatArray]:
    """Gradient and Hessian of kappa^2 with respect to the corner node."""
    jac = edges @ EQUILATERAL_INV
    q = np.sum(jac**2, axis=(1, 2))
    d = np.linalg.det(jac)
    cof = np.stack(
        [
            np.stack([jac[:, 1, 1], -jac[:, 1, 0]], axis=-1),
            np.stack([-jac[:, 0, 1], jac[:, 0, 0]], axis=-1),
        ],
        axis=1,
    )
    g_q = -2.0 * jac @ CORNER_ROW
    g_d = -cof @ CORNER_ROW
    h_q = 2.0 * float(CORNER_ROW @ CORNER_ROW)
    d2, d3, d4 = d**2, d**3, d**4
    grad = (2.0 * q / d2)[:, None] * g_q - (2.0 * q**2 / d3)[:, None] * g_d
    qq = np.einsum("ni,nj->nij", g_q, g_q)
    qd = np.einsum("ni,nj->nij", g_q, g_d)
    dd = np.einsum("ni,nj->nij", g_d, g_d)
    hess = (
        (2.0 / d2)[:, None, None] * qq
        + (2.0 * q * h_q / d2)[:, None, None] * np.eye(2)
        - (4.0 * q / d3)[:, None, None] * (qd + np.swapaxes(qd, 1, 2))
        + (6.0 * q**2 / d4)[:, None, None] * dd
    )
    return grad, hess


def rezone(
    lagrangian: FloatArray,
    topology: SubGridTopology,
    sweeps: int = REZONE_SWEEPS,
) -> FloatArray:
    """Improve subcell quality by local Newton steps on interior subnodes.

    Each interior subnode minimizes the sum of squared condition numbers of
    its incident subcells, measured against the equilateral triangle. Nodes
    of one color share no subcell and are moved together; colors are swept
    Gauss-Seidel style. A move is accepted only if every incident subcell
    stays positive, the objective decreases and the smallest incident area
    does not shrink. Boundary subnodes keep their Lagrangian positions.
    """
    positions = np.array(lagrangian, copy=True)
    sub = topology.subgrid
    ptr = topology.patch_ptr
    for _ in range(sweeps):
        for nodes in topology.colors:
            if nodes.size == 0:
                continue
            counts = ptr[nodes + 1] - ptr[nodes]
            entries = np.concatenate(
                [np.arange(ptr[g], ptr[g + 1]) for g in nodes]
            )
            owner = np.repeat(np.arange(nodes.size), counts)
            cells = topology.patch_cells[entries]
            subcells = topology.patch_subcells[entries]
            corners = topology.patch_corners[entries]
            cell_pos = cell_subnode_positions(topology, positions)
            _, edges = _corner_frames(cell_pos, sub, cells, subcells, corners)

            f, area = _quality(edges)
            f_sum = np.bincount(owner, f, nodes.size)
            min_area = np.full(nodes.size, np.inf)
            np.minimum.at(min_area, owner, area)
            grad_e, hess_e = _quality_derivatives(edges)
            grad = np.zeros((nodes.size, 2))
            hess = np.zeros((nodes.size, 2, 2))
            np.add.at(grad, owner, grad_e)
            np.add.at(hess, owner, hess_e)

            size = np.sqrt(np.maximum(min_area, 0.0))
            gnorm = np.linalg.norm(grad, axis=1)
            movable = np.isfinite(f_sum) & (
                gnorm * size > 1e-10 * np.maximum(f_sum, 1.0)
            )
            step = _newton_steps(grad, hess, size)

            accepted = np.zeros(nodes.size, dtype=bool)
            alpha = np.ones(nodes.size)
            for _ in range(LINE_SEARCH_STEPS):
                trial = movable & ~accepted
                if not np.any(trial):
                    break
                move = (alpha[:, np.newaxis] * step)[owner]
                trial_edges = edges - move[:, :, np.newaxis]
                f_t, area_t = _quality(trial_edges)
                f_sum_t = np.bincount(owner, f_t, nodes.size)
                min_t = np.full(nodes.size, np.inf)
                np.minimum.at(min_t, owner, area_t)
                ok = (
                    trial
                    & (min_t > 0.0)
                    & (f_sum_t < f_sum)
                    & (min_t >= min_area)
                )
                accepted |= ok
                alpha[trial & ~ok] *= 0.5
            positions[nodes[accepted]] += (
                alpha[accepted, np.newaxis] * step[accepted]
            )
    return positions


def _newton_steps(
    grad: FloatArray, hess: FloatArray, size: FloatArray
) -> FloatArray:
    det = np.linalg.det(hess)
    trace = np.trace(hess, axis1=1, axis2=2)
    definite = (det > 0.0) & (trace > 0.0)
    step = np.zeros_like(grad)
    if np.any(definite):
        step[definite] = -np.linalg.solve(
            hess[definite], grad[definite][:, :, np.newaxis]
        )[:, :, 0]
    gnorm = np.maximum(np.linalg.norm(grad, axis=1), 1e-300)
    fallback = ~definite
    step[fallback] = (
        -0.1 * size[fallback, np.newaxis] * grad[fallback]
        / gnorm[fallback, np.newaxis]
    )
    return step


def deformation_measure(
    old: FloatArray, lagrangian: FloatArray, topology: SubGridTopology
) -> FloatArray:
    """Max ``||F - I||_F`` over the subcells around each global subnode."""
    sub = topology.subgrid
    e_old = _subcell_edges(cell_subnode_positions(topology, old), sub)
    e_lag = _subcell_edges(cell_subnode_positions(topology, lagrangian), sub)
    grad = e_lag @ np.linalg.inv(e_old)
    dev = np.linalg.norm(grad - np.eye(2), axis=(-2, -1))
    sigma = np.zeros(topology.n_nodes)
    for a in range(3):
        np.maximum.at(sigma, topology.l2g[:, sub.subcells[:, a]], dev)
    return sigma


def _subcell_edges(cell_pos: FloatArray, sub: SubGrid) -> FloatArray:
    corners = cell_pos[:, sub.subcells]
    return np.stack(
        [
            corners[:, :, 1] - corners[:, :, 0],
            corners[:, :, 2] - corners[:, :, 0],
        ],
        axis=-1,
    )


def relaxation_factors(
    old: FloatArray,
    lagrangian: FloatArray,
    topology: SubGridTopology,
    mode: RelaxationMode = RelaxationMode.DEFORMATION,
    constant_omega: float = 0.7,
) -> FloatArray:
    """Per-subnode blend factor omega in [0, 1]."""
    if mode is RelaxationMode.LAGRANGIAN:
        return np.zeros(topology.n_nodes)
    if mode is RelaxationMode.CONSTANT:
        return np.full(topology.n_nodes, float(constant_omega))
    sigma = deformation_measure(old, lagrangian, topology)
    return np.minimum(1.0, sigma / (sigma + DEFORMATION_SCALE))


def relax(
    lagrangian: FloatArray, rezoned: FloatArray, omega: FloatArray
) -> FloatArray:
    """Return ``X^Lag + omega (X^Rez - X^Lag)``."""
    return np.asarray(
        lagrangian + omega[:, np.newaxis] * (rezoned - lagrangian)
    )


def move_mesh(
    topology: SubGridTopology,
    positions: FloatArray,
    dt: float,
    time: float,
    mode: MotionMode,
    model: GasModel,
    conditions: BoundaryConditions,
    node_states: Optional[FloatArray] = None,
    subcell_averages: Optional[FloatArray] = None,
    flags: Optional[BoolArray] = None,
    velocity_field: Optional[VelocityField] = None,
    relaxation: RelaxationMode = RelaxationMode.DEFORMATION,
    constant_omega: float = 0.7,
) -> MotionReport:
    """Compute X^{n+1} for one time step.

    Raises:
        TangledMeshError: If a subcell is not positive at X^{n+1}.
        InadmissibleStateError: If the nodal solver meets a bad state.
    """
    n_nodes = topology.n_nodes
    if mode is MotionMode.LAGRANGIAN:
        if node_states is None or subcell_averages is None:
            raise ValueError("Lagrangian motion needs predictor node states")
        flagged = (
            flags
            if flags is not None
            else np.zeros(topology.n_cells, dtype=bool)
        )
        field = compute_node_velocities(
            topology,
            positions,
            node_states,
            subcell_averages,
            flagged,
            time + 0.5 * dt,
            conditions,
            model,
        )
    elif mode is MotionMode.PRESCRIBED:
        if velocity_field is None:
            raise ValueError("Prescribed motion needs a velocity field")
        field = NodalVelocityField(
            np.asarray(velocity_field(positions, time), dtype=float)
        )
    else:
        field = NodalVelocityField(np.zeros((n_nodes, 2)))

    lag = lagrangian_positions(positions, field.velocities, dt)
    lag_areas = subcell_areas(topology, lag)
    if mode is MotionMode.LAGRANGIAN and np.all(lag_areas > 0.0):
        rezoned = rezone(lag, topology)
        omega = relaxation_factors(
            positions, lag, topology, relaxation, constant_omega
        )
    else:
        rezoned = lag
        omega = np.zeros(n_nodes)
    final = relax(lag, rezoned, omega)
    final_areas = subcell_areas(topology, final)
    if not np.all(final_areas > 0.0):
        tangled = int(np.count_nonzero(final_areas <= 0.0))
        logger.debug(f"🕸️ {tangled} subcells inverted at dt={dt:.3e}")
        raise TangledMeshError(f"{tangled} tangled subcells")
    return MotionReport(
        lagrangian=lag,
        rezoned=rezoned,
        omega=omega,
        positions=final,
        velocities=field,
        min_area_lagrangian=lag_areas.min(axis=1),
        min_area_final=final_areas.min(axis=1),
    )
