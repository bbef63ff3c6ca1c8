"""Compressible Euler and Navier-Stokes closures for a perfect gas.

States are arrays whose last axis holds ``(rho, rho*u, rho*v, rho*E)``.
Fluxes carry an extra trailing axis for the spatial direction, so a batch of
states with shape (..., 4) has fluxes of shape (..., 4, 2). Gradients of
conserved variables use the same (..., 4, 2) layout.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.aledg.numerics.exceptions import InadmissibleStateError

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]

DENSITY_FLOOR = 1e-12
PRESSURE_FLOOR = 1e-14


@dataclass(frozen=True)
class GasModel:
    """Perfect gas with optional constant viscosity.

    Attributes:
        gamma (float): Adiabatic index, > 1.
        mu (float): Dynamic viscosity, >= 0.
        prandtl (float): Prandtl number linking heat conduction to viscosity.
        r_gas (float): Specific gas constant.
    """

    gamma: float = 1.4
    mu: float = 0.0
    prandtl: float = 0.75
    r_gas: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma <= 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.mu < 0.0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.prandtl <= 0.0:
            raise ValueError("Prandtl number must be positive")

    @property
    def cv(self) -> float:
        return self.r_gas / (self.gamma - 1.0)

    @property
    def conductivity(self) -> float:
        return self.mu * self.gamma * self.cv / self.prandtl

    @property
    def viscous(self) -> bool:
        return self.mu > 0.0


def velocity(q: FloatArray) -> FloatArray:
    return q[..., 1:3] / q[..., 0:1]


def pressure(q: FloatArray, model: GasModel) -> FloatArray:
    """Return ``(gamma - 1)(rho E - rho |v|^2 / 2)``.

    Raises:
        InadmissibleStateError: If any density is not positive.
    """
    q = np.asarray(q, dtype=float)
    if np.any(~(q[..., 0] > 0.0)):
        raise InadmissibleStateError("Non-positive density in pressure")
    return _pressure(q, model)


def _pressure(q: FloatArray, model: GasModel) -> FloatArray:
    kinetic = 0.5 * (q[..., 1] ** 2 + q[..., 2] ** 2) / q[..., 0]
    return (model.gamma - 1.0) * (q[..., 3] - kinetic)


def sound_speed(q: FloatArray, model: GasModel) -> FloatArray:
    p = _pressure(q, model)
    return np.sqrt(np.maximum(model.gamma * p / q[..., 0], 0.0))


def primitive_to_conserved(w: FloatArray, model: GasModel) -> FloatArray:
    """Map ``(rho, u, v, p)`` to conserved variables."""
    w = np.asarray(w, dtype=float)
    q = np.empty_like(w)
    rho = w[..., 0]
    q[..., 0] = rho
    q[..., 1] = rho * w[..., 1]
    q[..., 2] = rho * w[..., 2]
    q[..., 3] = w[..., 3] / (model.gamma - 1.0) + 0.5 * rho * (
        w[..., 1] ** 2 + w[..., 2] ** 2
    )
    return q


def conserved_to_primitive(q: FloatArray, model: GasModel) -> FloatArray:
    """Map conserved variables to ``(rho, u, v, p)``."""
    q = np.asarray(q, dtype=float)
    w = np.empty_like(q)
    w[..., 0] = q[..., 0]
    w[..., 1:3] = velocity(q)
    w[..., 3] = pressure(q, model)
    return w


def admissible_mask(q: FloatArray, model: GasModel) -> BoolArray:
    """Pointwise admissibility over the leading axes of ``q``."""
    q = np.asarray(q, dtype=float)
    finite = np.all(np.isfinite(q), axis=-1)
    with np.errstate(all="ignore"):
        rho_ok = q[..., 0] > DENSITY_FLOOR
        p = _pressure(q, model)
        p_ok = p > PRESSURE_FLOOR
    return np.asarray(finite & rho_ok & p_ok)


def is_admissible(q: FloatArray, model: GasModel) -> bool:
    """True iff every state is finite with positive density and pressure."""
    return bool(np.all(admissible_mask(q, model)))


def _require_admissible(q: FloatArray, model: GasModel, where: str) -> None:
    if not is_admissible(q, model):
        raise InadmissibleStateError(f"Inadmissible state in {where}")


def euler_flux(
    q: FloatArray, model: GasModel, strict: bool = True
) -> FloatArray:
    """Inviscid flux tensor, (..., 4) -> (..., 4, 2).

    Args:
        q (FloatArray): Conserved states.
        model (GasModel): Gas model.
        strict (bool): Raise on inadmissible input. The solver core passes
            False and checks admissibility itself.

    Raises:
        InadmissibleStateError: If ``strict`` and a state is inadmissible.
    """
    q = np.asarray(q, dtype=float)
    if strict:
        _require_admissible(q, model, "euler_flux")
    v = velocity(q)
    p = _pressure(q, model)
    flux = np.empty(q.shape + (2,))
    flux[..., 0, :] = q[..., 1:3]
    flux[..., 1:3, :] = q[..., 1:3, np.newaxis] * v[..., np.newaxis, :]
    flux[..., 1, 0] += p
    flux[..., 2, 1] += p
    flux[..., 3, :] = v * (q[..., 3] + p)[..., np.newaxis]
    return flux


def viscous_flux(
    q: FloatArray, grad_q: FloatArray, model: GasModel
) -> FloatArray:
    """Viscous part ``(0, tau, tau v + kappa grad T)`` of the flux.

    Velocity and temperature gradients follow from the conserved gradients
    by the chain rule.
    """
    rho = q[..., 0]
    v = velocity(q)
    grad_rho = grad_q[..., 0, :]
    outer = v[..., :, np.newaxis] * grad_rho[..., np.newaxis, :]
    grad_v = (grad_q[..., 1:3, :] - outer) / rho[..., np.newaxis, np.newaxis]
    grad_p = (model.gamma - 1.0) * (
        grad_q[..., 3, :]
        - np.einsum("...i,...ij->...j", v, grad_q[..., 1:3, :])
        + 0.5 * np.sum(v**2, axis=-1)[..., np.newaxis] * grad_rho
    )
    p = _pressure(q, model)
    grad_t = (
        grad_p / rho[..., np.newaxis]
        - (p / rho**2)[..., np.newaxis] * grad_rho
    ) / model.r_gas

    div_v = grad_v[..., 0, 0] + grad_v[..., 1, 1]
    tau = model.mu * (grad_v + np.swapaxes(grad_v, -1, -2))
    tau[..., 0, 0] -= 2.0 / 3.0 * model.mu * div_v
    tau[..., 1, 1] -= 2.0 / 3.0 * model.mu * div_v

    flux = np.zeros(q.shape + (2,))
    flux[..., 1:3, :] = tau
    flux[..., 3, :] = (
        np.einsum("...ij,...i->...j", tau, v) + model.conductivity * grad_t
    )
    return flux


def navier_stokes_flux(
    q: FloatArray, grad_q: FloatArray, model: GasModel, strict: bool = True
) -> FloatArray:
    """Euler flux minus the viscous stress and heat conduction terms.

    The momentum flux is ``rho v v + sigma`` with
    ``sigma = (p + 2/3 mu div v) I - mu (grad v + grad v^T)`` and the energy
    flux is ``v (rho E) + sigma v - kappa grad T``.

    Raises:
        InadmissibleStateError: If ``strict`` and a state is inadmissible.
    """
    flux = euler_flux(q, model, strict=strict)
    if not model.viscous:
        return flux
    return flux - viscous_flux(q, np.asarray(grad_q, dtype=float), model)


def physical_flux(
    q: FloatArray, grad_q: FloatArray, model: GasModel
) -> FloatArray:
    """Non-raising flux used inside the solver loops."""
    if model.viscous:
        return navier_stokes_flux(q, grad_q, model, strict=False)
    return euler_flux(q, model, strict=False)


def max_ale_wavespeed(
    q: FloatArray,
    normal: FloatArray,
    mesh_velocity: FloatArray,
    model: GasModel,
    strict: bool = True,
) -> FloatArray:
    """Return ``|v.n - V.n| + c`` for unit normals ``n``.

    Raises:
        InadmissibleStateError: If ``strict`` and a state is inadmissible.
    """
    q = np.asarray(q, dtype=float)
    if strict:
        _require_admissible(q, model, "max_ale_wavespeed")
    relative = np.sum(
        (velocity(q) - np.asarray(mesh_velocity, dtype=float))
        * np.asarray(normal, dtype=float),
        axis=-1,
    )
    return np.abs(relative) + sound_speed(q, model)


def max_viscous_eigenvalue(q: FloatArray, model: GasModel) -> FloatArray:
    """Return ``max(4 mu / (3 rho), gamma mu / (Pr rho))``."""
    rho = np.asarray(q, dtype=float)[..., 0]
    if np.any(~(rho > 0.0)):
        raise InadmissibleStateError("Non-positive density")
    scale = max(4.0 / 3.0, model.gamma / model.prandtl)
    return scale * model.mu / rho


def rotate(q: FloatArray, angle: float) -> FloatArray:
    """Rotate the momentum of states counterclockwise by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    out = np.array(q, dtype=float, copy=True)
    mx, my = q[..., 1], q[..., 2]
    out[..., 1] = c * mx - s * my
    out[..., 2] = s * mx + c * my
    return out
