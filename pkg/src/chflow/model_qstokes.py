"""Model II: one implicit step of the quasi-stationary Stokes / Cahn-Hilliard
system with mass-averaged velocity, Navier-slip walls and pressure damping.

Unknowns per step are the slip velocity dofs ``u`` (interior faces plus the
tangential wall values), the mean-free pressure ``lambda0``, the modified
chemical potential ``omega`` and the phase field ``phi``. One extra scalar
``c`` pairs with the constraint ``mean(lambda0) = 0``; it takes the place of
the projection onto mean-free functions in the potential equation

    omega + kappa (phi + phi_k)/2 - F0'(phi) + lap phi - alpha lambda0 + c = 0

and equals ``-alpha`` times the mean pressure at a solution.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import diagnostics as dg
from .grid import FaceField, Field, Grid, NavierSlip, assemble_viscous_form
from .linsolve import KrylovConfig, NewtonConfig
from .model_agg import EnergyInequalityError, SolverFailure, energy_tolerance, solve_step
from .params import ModelParams
from .potential import f0_prime, f0_second


@dataclass(frozen=True, eq=False)
class StateQS:
    u: FaceField
    lambda0: Field
    omega: Field
    phi: Field

    def __post_init__(self):
        if np.any(np.abs(self.phi.values) >= 1):
            raise ValueError("phase field must satisfy |phi| < 1")
        if np.any(self.u.normal_trace() != 0):
            raise ValueError("boundary-normal velocity must vanish")
        lam = self.lambda0.values
        if abs(lam.mean()) > 1e-12 * (1 + np.abs(lam).max()):
            raise ValueError(f"lambda0 must be mean free (mean {lam.mean():.3e})")

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    def rho(self, p: ModelParams) -> Field:
        return Field(self.grid, p.rho(self.phi.values))


def check_params_qstokes(p: ModelParams) -> list[str]:
    out = []
    if not p.gamma > 0:
        out.append(f"friction gamma must be positive for Navier slip (gamma={p.gamma})")
    if p.b_minus == 0:
        out.append("Model II needs distinct specific densities (rho_plus != rho_minus)")
    lo, _ = p.transition_mobility.bounds()
    if not lo > 0:
        out.append("Model II needs a strictly positive transition mobility")
    return out


def initial_state_qs(phi0: Field) -> StateQS:
    g = phi0.grid
    zero = Field.constant(g, 0.0)
    return StateQS(FaceField.zeros(g), zero, zero, phi0)


class QSSystem:
    """Residual and Jacobian of one Model II step for fixed previous state."""

    def __init__(self, prev: StateQS, p: ModelParams, h: float):
        if not h > 0:
            raise ValueError(f"time step must be positive, got {h}")
        issues = check_params_qstokes(p)
        if issues:
            raise ValueError("; ".join(issues))
        g = prev.grid
        self.grid, self.p, self.h, self.prev = g, p, h, prev
        dofs = g.slip_dofs
        self.dofs = dofs
        self.nu_ = dofs.size
        self.nc = g.n_cells
        pk = prev.phi.flat
        self.phik = pk
        self.rhok_f = g.face_avg @ p.rho(pk)
        self.phik_f = g.face_avg @ pk
        self.m_f = g.face_avg @ p.mobility(pk)
        self.mr = p.transition_mobility(pk)
        nu, eta = Field(g, p.viscosity(pk)), Field(g, p.bulk_viscosity(pk))
        self.visc_ext = assemble_viscous_form(nu, eta, NavierSlip(p.gamma)).matrix
        self.visc = (self.visc_ext[dofs][:, dofs] / g.cell_area).tocsr()
        # dof vector -> full face vector (wall dofs carry no normal flux)
        self.Ef = g.embed(dofs, g.n_ext)[: g.n_faces].tocsr()
        G, D = g.grad, g.div
        self.L = g.laplacian
        self.a_lam = (self.Ef.T @ sp.diags(p.beta * self.rhok_f) @ G).tocsr()
        self.a_om = (self.Ef.T @ sp.diags(self.phik_f) @ G).tocsr()
        self.b_u = (D @ sp.diags(self.rhok_f) @ self.Ef).tocsr()
        self.c_u = (D @ sp.diags(self.phik_f) @ self.Ef).tocsr()
        self.c_om = (-p.c_plus**2 * (D @ sp.diags(self.m_f) @ G - sp.diags(self.mr))).tocsr()
        sl = np.cumsum([0, self.nu_, self.nc, self.nc, self.nc])
        self.su, self.slam, self.som, self.sphi = (slice(sl[k], sl[k + 1]) for k in range(4))
        self.size = sl[-1] + 1

    def pack(self, s: StateQS, c: float = 0.0) -> np.ndarray:
        x = np.zeros(self.size)
        x[self.su] = s.u.ext[self.dofs]
        x[self.slam] = s.lambda0.flat
        x[self.som] = s.omega.flat
        x[self.sphi] = s.phi.flat
        x[-1] = c
        return x

    def unpack(self, x: np.ndarray) -> StateQS:
        g = self.grid
        ext = np.zeros(g.n_ext)
        ext[self.dofs] = x[self.su]
        return StateQS(FaceField.from_ext(g, ext), Field(g, x[self.slam]), Field(g, x[self.som]),
                       Field(g, x[self.sphi]))

    def split(self, x):
        return x[self.su], x[self.slam], x[self.som], x[self.sphi], x[-1]

    def residual(self, x: np.ndarray) -> np.ndarray:
        p, h = self.p, self.h
        u, lam, om, phi, c = self.split(x)
        k = p.split.kappa
        ra = self.visc @ u + self.a_lam @ lam + self.a_om @ om
        rb = p.b_minus * (phi - self.phik) / h + self.b_u @ u + h * lam
        rc = (phi - self.phik) / h + self.c_u @ u + self.c_om @ om
        rd = om + 0.5 * k * (phi + self.phik) - f0_prime(phi, p.potential, p.split) + self.L @ phi \
            - p.alpha * lam + c
        return np.concatenate([ra, rb, rc, rd, [lam.mean()]])

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        p, h, nc = self.p, self.h, self.nc
        phi = x[self.sphi]
        k = p.split.kappa
        I = sp.identity(nc, format="csr")
        d_phi = sp.diags(0.5 * k - f0_second(phi, p.potential, p.split)) + self.L
        ones = sp.csr_matrix(np.ones((nc, 1)))
        mean_row = sp.csr_matrix(np.full((1, nc), 1.0 / nc))
        return sp.bmat([
            [self.visc, self.a_lam, self.a_om, None, None],
            [self.b_u, h * I, None, (p.b_minus / h) * I, None],
            [self.c_u, None, self.c_om, I / h, None],
            [None, -p.alpha * I, I, d_phi, ones],
            [None, mean_row, None, None, None],
        ], format="csr")

    def dissipation(self, x: np.ndarray) -> float:
        """Total dissipation from the assembled forms (stepper-side path)."""
        g, p, h = self.grid, self.p, self.h
        u, lam, om, _, _ = self.split(x)
        visc = float(u @ (self.visc_ext[self.dofs][:, self.dofs] @ u))
        go = g.grad @ om
        cp2 = p.c_plus**2
        diff = cp2 * float(np.sum(g.face_weights * self.m_f * go * go))
        cells = cp2 * float(np.sum(self.mr * om * om)) + h * p.beta * float(lam @ lam)
        return visc + diff + cells * g.cell_area


def residual_qstokes(z: StateQS, prev: StateQS, p: ModelParams, h: float, c: float = 0.0) -> np.ndarray:
    sys = QSSystem(prev, p, h)
    return sys.residual(sys.pack(z, c))


def assemble_jacobian_qstokes(z: StateQS, prev: StateQS, p: ModelParams, h: float,
                              c: float = 0.0) -> sp.csr_matrix:
    sys = QSSystem(prev, p, h)
    return sys.jacobian(sys.pack(z, c))


def step_qstokes(prev: StateQS, p: ModelParams, h: float, ncfg: NewtonConfig = NewtonConfig(),
                 kcfg: KrylovConfig = KrylovConfig(), *, step: int = 1, time: float | None = None,
                 check: bool = True):
    """Advance Model II by one step; returns ``(state, DiagRecord)``.

    The model has no kinetic energy, so ``E_kin`` is reported as zero and
    ``E_tot`` equals ``E_free``. ``record.extras`` carries the dissipation
    breakdown and the multiplier ``c``.
    """
    sys = QSSystem(prev, p, h)
    ncfg = dataclasses.replace(ncfg, eps_barrier=p.potential.eps_barrier)
    res = solve_step(sys, sys.pack(prev), ncfg, kcfg, f"Model II step {step}")
    try:
        new = sys.unpack(res.x)
    except ValueError as exc:
        raise SolverFailure(f"Model II step {step}: converged iterate is not admissible: {exc}", exc) from exc
    record = qs_record(prev, new, p, h, ncfg.res_tol, step=step, time=step * h if time is None else time,
                       newton_iters=res.iterations, linear_iters=res.linear_iterations)
    record.extras["c"] = float(res.x[-1])
    record.extras["residual"] = res.residual
    if check and not record.extras["passed"]:
        raise EnergyInequalityError(
            f"Model II step {step}: energy inequality violated (slack {record.energy_slack:.3e}, "
            f"tol {record.extras['tol']:.3e})", record)
    return new, record


def qs_record(prev: StateQS, new: StateQS, p: ModelParams, h: float, res_tol: float, *, step=1, time=0.0,
              newton_iters=0, linear_iters=0) -> dg.DiagRecord:
    g = new.grid
    e_free = dg.energy_free(new.phi, p)
    e_prev = dg.energy_free(prev.phi, p)
    increments = dg.gradient_energy(g, new.phi.values - prev.phi.values)
    parts = dg.dissipation_qstokes(new, prev.phi, p, h)
    tol = energy_tolerance(res_tol, e_prev)
    rep = dg.check_step(e_prev, e_free, increments, parts.total, h, tol)
    mean, lo, hi = dg.phase_stats(new.phi)
    extras = {"E_prev": e_prev, "increments": increments, "tol": tol, "passed": rep.passed,
              "dissipation": parts.parts()}
    return dg.DiagRecord(step, time, e_free, 0.0, e_free, parts.total, mean, lo, hi, rep.slack,
                         newton_iters, linear_iters, extras=extras)


def _mean_free(a: np.ndarray) -> np.ndarray:
    return a - a.mean()


def mean_omega(omega: Field, phi_k: Field, p: ModelParams) -> float:
    """Mean of ``omega`` implied by the phase equation, from its mean-free part.

    Integrating the phase equation with conserved mean gives
    ``int m_r(phi_k) omega = 0``, hence
    ``mean(omega) = -int m_r P0(omega) / int m_r``.
    """
    mr = p.transition_mobility(phi_k.values)
    if not np.all(mr > 0):
        raise ValueError("mean_omega requires a strictly positive transition mobility")
    return -float(np.sum(mr * _mean_free(omega.values)) / np.sum(mr))


def reconstruct_full_pressure(lambda0: Field, omega: Field, phi: Field, phi_k: Field, p: ModelParams) -> Field:
    """Full pressure ``lambda0 + lambda_bar`` from the mean of the potential equation."""
    if p.alpha == 0:
        raise ValueError("pressure reconstruction is undefined for matched densities (alpha = 0)")
    m = float(phi_k.values.mean())
    w_bar = mean_omega(omega, phi_k, p)
    f_mean = float(np.mean(f0_prime(phi.values, p.potential, p.split)))
    lam_bar = -(f_mean - w_bar - p.split.kappa * m) / p.alpha
    return Field(phi.grid, lambda0.values + lam_bar)


def potential_residual(lam: Field, omega: Field, phi: Field, phi_k: Field, p: ModelParams) -> np.ndarray:
    """Cellwise residual of ``omega + kappa (phi+phi_k)/2 = F0'(phi) - lap phi + alpha lam``."""
    g = phi.grid
    lap = (g.laplacian @ phi.flat).reshape(g.shape)
    lhs = omega.values + 0.5 * p.split.kappa * (phi.values + phi_k.values)
    return lhs - f0_prime(phi.values, p.potential, p.split) + lap - p.alpha * lam.values
