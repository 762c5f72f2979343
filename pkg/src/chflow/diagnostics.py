"""Energies, dissipation functionals and the per-step energy check.

Everything here is computed directly from the field arrays with slicing,
independently of the sparse operators the steppers assemble, so the two code
paths can be checked against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .grid import FaceField, Field, Grid
from .params import ModelParams
from .potential import f_log

CSV_FIELDS = (
    "step", "time", "E_free", "E_kin", "E_tot", "D", "mean_phi", "min_phi", "max_phi",
    "energy_slack", "newton_iters", "linear_iters",
)


@dataclass
class DiagRecord:
    step: int
    time: float
    E_free: float
    E_kin: float
    E_tot: float
    D: float
    mean_phi: float
    min_phi: float
    max_phi: float
    energy_slack: float
    newton_iters: int
    linear_iters: int
    # not serialized: E_prev, increments, tolerance, component breakdown
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    def row(self) -> list:
        return [getattr(self, f) for f in CSV_FIELDS]


@dataclass(frozen=True)
class CheckReport:
    passed: bool
    slack: float
    tol: float


@dataclass(frozen=True)
class QSDissipation:
    viscous: float
    diffusion: float
    transition: float
    damping: float
    friction: float

    @property
    def total(self) -> float:
        return self.viscous + self.diffusion + self.transition + self.damping + self.friction

    def parts(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _face_values(grid: Grid, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell values averaged to x- and y-faces (boundary faces copy their cell)."""
    cx = np.empty((grid.nx + 1, grid.ny))
    cx[1:-1] = 0.5 * (c[1:] + c[:-1])
    cx[0], cx[-1] = c[0], c[-1]
    cy = np.empty((grid.nx, grid.ny + 1))
    cy[:, 1:-1] = 0.5 * (c[:, 1:] + c[:, :-1])
    cy[:, 0], cy[:, -1] = c[:, 0], c[:, -1]
    return cx, cy


def _grad_interior(grid: Grid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.diff(f, axis=0) / grid.hx, np.diff(f, axis=1) / grid.hy


def gradient_energy(grid: Grid, f: np.ndarray) -> float:
    """``int |grad f|^2 / 2`` over the interior faces."""
    gx, gy = _grad_interior(grid, f)
    return 0.5 * grid.cell_area * float(np.sum(gx * gx) + np.sum(gy * gy))


def energy_free(phi: Field, p: ModelParams) -> float:
    g = phi.grid
    if np.any(np.abs(phi.values) > 1):
        raise ValueError("free energy requires |phi| <= 1")
    bulk = float(np.sum(f_log(phi.values, p.potential))) * g.cell_area
    return bulk + gradient_energy(g, phi.values)


def energy_kinetic(v: FaceField, rho: Field) -> float:
    g = v.grid
    rx, ry = _face_values(g, rho.values)
    wx = np.full(rx.shape, g.cell_area)
    wx[[0, -1]] *= 0.5
    wy = np.full(ry.shape, g.cell_area)
    wy[:, [0, -1]] *= 0.5
    return 0.5 * float(np.sum(wx * rx * v.x**2) + np.sum(wy * ry * v.y**2))


def _node_mean(c: np.ndarray) -> np.ndarray:
    pad = np.pad(c, 1)
    cnt = np.pad(np.ones_like(c), 1)
    s = pad[1:, 1:] + pad[:-1, 1:] + pad[1:, :-1] + pad[:-1, :-1]
    n = cnt[1:, 1:] + cnt[:-1, 1:] + cnt[1:, :-1] + cnt[:-1, :-1]
    return s / n


def _wall_split(g: Grid, wall: np.ndarray):
    nb, nl = g.nx + 1, g.ny + 1
    return wall[:nb], wall[nb: 2 * nb], wall[2 * nb: 2 * nb + nl], wall[2 * nb + nl:]


def viscous_dissipation(u: FaceField, nu: np.ndarray, eta: np.ndarray) -> float:
    """``int 2 nu |Du|^2 + eta (div u)^2`` with MAC strain rates."""
    g = u.grid
    hx, hy = g.hx, g.hy
    exx = np.diff(u.x, axis=0) / hx
    eyy = np.diff(u.y, axis=1) / hy
    bottom, top, left, right = _wall_split(g, u.wall)
    dudy = np.empty((g.nx + 1, g.ny + 1))
    dudy[:, 1:-1] = np.diff(u.x, axis=1) / hy
    dudy[:, 0] = (u.x[:, 0] - bottom) * 2 / hy
    dudy[:, -1] = (top - u.x[:, -1]) * 2 / hy
    dvdx = np.empty((g.nx + 1, g.ny + 1))
    dvdx[1:-1] = np.diff(u.y, axis=0) / hx
    dvdx[0] = (u.y[0] - left) * 2 / hx
    dvdx[-1] = (right - u.y[-1]) * 2 / hx
    shear = dudy + dvdx
    wn = g.node_weights.reshape(g.nx + 1, g.ny + 1)
    cells = np.sum(2 * nu * (exx**2 + eyy**2) + eta * (exx + eyy) ** 2) * g.cell_area
    return float(cells + np.sum(_node_mean(nu) * shear**2 * wn))


def strain_norm(u: FaceField) -> float:
    """L2 norm of the symmetric gradient, ``sqrt(int |Du|^2)``."""
    ones = np.ones(u.grid.shape)
    return math.sqrt(0.5 * viscous_dissipation(u, ones, 0 * ones))


def friction_term(u: FaceField, gamma: float) -> float:
    return gamma * float(np.dot(u.grid.wall_weights, u.wall**2))


def tangential_norm(u: FaceField) -> float:
    return math.sqrt(friction_term(u, 1.0))


def dissipation_agg(state_new, phi_k: Field, p: ModelParams) -> float:
    """Viscous, diffusive and phase-transition dissipation of a Model I step."""
    g = phi_k.grid
    pk = phi_k.values
    visc = viscous_dissipation(state_new.v, p.viscosity(pk), p.bulk_viscosity(pk))
    mx, my = _face_values(g, p.mobility(pk))
    gx, gy = _grad_interior(g, state_new.mu.values)
    diff = float(np.sum(mx[1:-1] * gx**2) + np.sum(my[:, 1:-1] * gy**2)) * g.cell_area
    w = state_new.mu.values + p.alpha * state_new.lam.values
    trans = float(np.sum(p.transition_mobility(pk) * w * w)) * g.cell_area
    return visc + diff + trans


def dissipation_qstokes(state_new, phi_k: Field, p: ModelParams, h: float) -> QSDissipation:
    g = phi_k.grid
    pk = phi_k.values
    cp2 = p.c_plus**2
    visc = viscous_dissipation(state_new.u, p.viscosity(pk), p.bulk_viscosity(pk))
    mx, my = _face_values(g, p.mobility(pk))
    om = state_new.omega.values
    gx, gy = _grad_interior(g, om)
    diff = cp2 * float(np.sum(mx[1:-1] * gx**2) + np.sum(my[:, 1:-1] * gy**2)) * g.cell_area
    trans = cp2 * float(np.sum(p.transition_mobility(pk) * om * om)) * g.cell_area
    damp = h * p.beta * float(np.sum(state_new.lambda0.values**2)) * g.cell_area
    fric = friction_term(state_new.u, p.gamma)
    return QSDissipation(visc, diff, trans, damp, fric)


def check_step(prev_E: float, new_E: float, increments: float, D: float, h: float, tol: float) -> CheckReport:
    """Discrete energy inequality ``new_E + increments + h D <= prev_E + tol``."""
    slack = prev_E - new_E - increments - h * D
    return CheckReport(slack >= -tol, slack, tol)


def phase_stats(phi: Field) -> tuple[float, float, float]:
    g = phi.grid
    return float(phi.values.sum() * g.cell_area / g.area), float(phi.values.min()), float(phi.values.max())
