"""Model I: one implicit step of the quasi-incompressible Navier-Stokes /
Cahn-Hilliard system with phase transition (volume-averaged velocity).

Unknowns per step are the interior face velocities ``v``, the pressure
``lam``, the chemical potential ``mu`` and the phase field ``phi``. The
momentum equation is discretized in its skew-symmetrized form

    (rho v - rho_k v_k)/h - (rho - rho_k)/(2h) v + C(rho_k v + J) v
        - div S(phi_k, Dv) + grad lam + phi_k grad mu = 0

where ``C(F) w = div(F w) - div(F) w / 2`` is the central, exactly skew
convection operator on the velocity control volumes and
``J = -b_minus m(phi_k) grad mu``. All coefficients are lagged at ``phi_k``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics as dg
from .grid import FaceField, Field, Grid, NoSlip, assemble_viscous_form
from .linsolve import KrylovConfig, NewtonConfig, NewtonError, newton_solve
from .params import ModelParams
from .potential import f0_prime, f0_second, f_log_prime


class SolverFailure(RuntimeError):
    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class EnergyInequalityError(RuntimeError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True, eq=False)
class StateAGG:
    v: FaceField
    lam: Field
    mu: Field
    phi: Field

    def __post_init__(self):
        if np.any(np.abs(self.phi.values) >= 1):
            raise ValueError("phase field must satisfy |phi| < 1")
        if np.any(self.v.normal_trace() != 0) or np.any(self.v.wall != 0):
            raise ValueError("Model I velocity must vanish on the boundary")

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    def rho(self, p: ModelParams) -> Field:
        return Field(self.grid, p.rho(self.phi.values))


def initial_state_agg(phi0: Field, p: ModelParams, v0: FaceField | None = None) -> StateAGG:
    """State with consistent ``mu = F'(phi) - lap phi`` and ``mu + alpha lam = 0``."""
    g = phi0.grid
    mu = f_log_prime(phi0.flat, p.potential) - g.laplacian @ phi0.flat
    lam = -mu / p.alpha if p.alpha != 0 else np.zeros_like(mu)
    return StateAGG(v0 if v0 is not None else FaceField.zeros(g), Field(g, lam), Field(g, mu), phi0)


@lru_cache(maxsize=8)
def convection_stencil(grid: Grid):
    """Index quadruples ``(P, N, f, a)`` with ``C(F)[P, N] += a F[f]``.

    ``P`` and ``N`` index interior-face velocity unknowns, ``f`` the full face
    layout. Every pair appears with the opposite sign for ``(N, P)`` so that
    ``C(F)`` is exactly skew-symmetric for any face flux ``F``.
    """
    g = grid
    nx, ny, hx, hy = g.nx, g.ny, g.hx, g.hy
    dof_of = np.full(g.n_faces, -1)
    dof_of[g.interior_faces] = np.arange(g.interior_faces.size)
    scale = 1.0 / (2 * g.cell_area)
    P, N, F, A = [], [], [], []

    def add(cv, nb, f1, f2, coef, ok):
        cv, nb, f1, f2 = (np.asarray(a)[ok] for a in (cv, nb, f1, f2))
        for f in (f1, f2):
            P.append(dof_of[cv])
            N.append(dof_of[nb])
            F.append(f)
            A.append(np.full(cv.size, 0.5 * coef * scale))

    i, j = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    xf, yf = g.xface_index, g.yface_index
    cv = xf(i, j)
    add(cv, xf(i + 1, j), xf(i, j), xf(i + 1, j), hy, i + 1 <= nx - 1)
    add(cv, xf(i - 1, j), xf(i - 1, j), xf(i, j), -hy, i - 1 >= 1)
    add(cv, xf(i, j + 1), yf(i - 1, j + 1), yf(i, j + 1), hx, j + 1 <= ny - 1)
    add(cv, xf(i, j - 1), yf(i - 1, j), yf(i, j), -hx, j >= 1)

    i, j = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    cv = yf(i, j)
    add(cv, yf(i, j + 1), yf(i, j), yf(i, j + 1), hx, j + 1 <= ny - 1)
    add(cv, yf(i, j - 1), yf(i, j - 1), yf(i, j), -hx, j - 1 >= 1)
    add(cv, yf(i + 1, j), xf(i + 1, j - 1), xf(i + 1, j), hy, i + 1 <= nx - 1)
    add(cv, yf(i - 1, j), xf(i, j - 1), xf(i, j), -hy, i >= 1)
    return tuple(np.concatenate(a) for a in (P, N, F, A))


def convection_matrix(grid: Grid, flux: np.ndarray) -> sp.csr_matrix:
    P, N, f, a = convection_stencil(grid)
    n = grid.interior_faces.size
    return sp.csr_matrix((a * flux[f], (P, N)), shape=(n, n))


def convection_flux_derivative(grid: Grid, v: np.ndarray) -> sp.csr_matrix:
    """``d(C(F) v)/dF`` for fixed ``v`` (interior dofs x full faces)."""
    P, N, f, a = convection_stencil(grid)
    return sp.csr_matrix((a * v[N], (P, f)), shape=(grid.interior_faces.size, grid.n_faces))


class AGGSystem:
    """Residual and Jacobian of one Model I step for fixed previous state."""

    def __init__(self, prev: StateAGG, p: ModelParams, h: float):
        if not h > 0:
            raise ValueError(f"time step must be positive, got {h}")
        g = prev.grid
        self.grid, self.p, self.h, self.prev = g, p, h, prev
        dofs = g.interior_faces
        self.dofs = dofs
        self.nv = dofs.size
        self.nc = g.n_cells
        self.gauge = p.pressure_gauge
        self.E = g.embed(dofs)
        pk = prev.phi.flat
        self.phik = pk
        self.vk = prev.v.faces[dofs]
        self.rhok_f = g.face_avg @ p.rho(pk)
        self.phik_f = g.face_avg @ pk
        self.m_f = g.face_avg @ p.mobility(pk)
        self.mr = p.transition_mobility(pk)
        nu, eta = Field(g, p.viscosity(pk)), Field(g, p.bulk_viscosity(pk))
        self.visc_full = assemble_viscous_form(nu, eta, NoSlip()).matrix
        self.visc = (self.visc_full[dofs][:, dofs] / g.cell_area).tocsr()
        self.G = g.grad
        self.Gd = g.grad[dofs].tocsr()
        self.D = g.div
        self.L = g.laplacian
        self.avg_d = g.face_avg[dofs].tocsr()
        self.mG = sp.diags(self.m_f) @ self.G
        self.div_m_grad = (self.D @ self.mG).tocsr()
        self.div_phik = (self.D @ sp.diags(self.phik_f) @ self.E).tocsr()
        self.phik_grad = (sp.diags(self.phik_f[dofs]) @ self.Gd).tocsr()
        sl = np.cumsum([0, self.nv, self.nc, self.nc, self.nc])
        self.sv, self.slam, self.smu, self.sphi = (slice(sl[k], sl[k + 1]) for k in range(4))
        self.size = sl[-1] + (1 if self.gauge else 0)

    # -- packing -----------------------------------------------------------
    def pack(self, s: StateAGG) -> np.ndarray:
        x = np.zeros(self.size)
        x[self.sv] = s.v.faces[self.dofs]
        x[self.slam] = s.lam.flat
        x[self.smu] = s.mu.flat
        x[self.sphi] = s.phi.flat
        return x

    def unpack(self, x: np.ndarray) -> StateAGG:
        g = self.grid
        v = np.zeros(g.n_faces)
        v[self.dofs] = x[self.sv]
        return StateAGG(FaceField.from_faces(g, v), Field(g, x[self.slam]), Field(g, x[self.smu]),
                        Field(g, x[self.sphi]))

    def split(self, x):
        ell = x[-1] if self.gauge else 0.0
        return x[self.sv], x[self.slam], x[self.smu], x[self.sphi], ell

    # -- residual ----------------------------------------------------------
    def flux(self, v, mu):
        return self.rhok_f * (self.E @ v) - self.p.b_minus * (self.mG @ mu)

    def residual(self, x: np.ndarray) -> np.ndarray:
        p, h, g = self.p, self.h, self.grid
        v, lam, mu, phi, ell = self.split(x)
        a = p.alpha
        k = p.split.kappa
        rhok_d = self.rhok_f[self.dofs]
        rho_d = p.b_plus + p.b_minus * (self.avg_d @ phi)
        conv = convection_matrix(g, self.flux(v, mu)) @ v
        ra = (0.5 * (rho_d + rhok_d) * v - rhok_d * self.vk) / h + conv + self.visc @ v \
            + self.Gd @ lam + self.phik_grad @ mu
        source = self.mr * (mu + a * lam)
        rb = self.D @ (self.E @ v) + a * source + ell
        rc = (phi - self.phik) / h + self.div_phik @ v - self.div_m_grad @ mu + source
        rd = f0_prime(phi, p.potential, p.split) - self.L @ phi - mu - 0.5 * k * (phi + self.phik)
        parts = [ra, rb, rc, rd]
        if self.gauge:
            parts.append([lam.mean()])
        return np.concatenate(parts)

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        p, h, g = self.p, self.h, self.grid
        v, lam, mu, phi, _ = self.split(x)
        a, bm = p.alpha, p.b_minus
        k = p.split.kappa
        nc = self.nc
        rhok_d = self.rhok_f[self.dofs]
        rho_d = p.b_plus + bm * (self.avg_d @ phi)
        dC = convection_flux_derivative(g, v)
        K = convection_matrix(g, self.flux(v, mu))
        I = sp.identity(nc, format="csr")
        mr = sp.diags(self.mr)

        a_v = sp.diags(0.5 * (rho_d + rhok_d) / h) + K + dC @ sp.diags(self.rhok_f) @ self.E + self.visc
        a_lam = self.Gd
        a_mu = dC @ (-bm * self.mG) + self.phik_grad
        a_phi = sp.diags(0.5 * bm * v / h) @ self.avg_d

        b_v = self.D @ self.E
        c_v = self.div_phik
        c_mu = -self.div_m_grad + mr
        d_phi = sp.diags(f0_second(phi, p.potential, p.split) - 0.5 * k) - self.L

        blocks = [
            [a_v, a_lam, a_mu, a_phi],
            [b_v, a * a * mr, a * mr, None],
            [c_v, a * mr, c_mu, I / h],
            [None, None, -I, d_phi],
        ]
        if self.gauge:
            ones = sp.csr_matrix(np.ones((nc, 1)))
            for row, extra in zip(blocks, [None, ones, None, None]):
                row.append(extra)
            blocks.append([None, sp.csr_matrix(np.full((1, nc), 1.0 / nc)), None, None, None])
        return sp.bmat(blocks, format="csr")

    # -- energy bookkeeping --------------------------------------------------
    def dissipation(self, x: np.ndarray) -> float:
        """Dissipation from the assembled quadratic forms (stepper-side path)."""
        g, p = self.grid, self.p
        v, lam, mu, _, _ = self.split(x)
        visc = float(v @ (self.visc_full[self.dofs][:, self.dofs] @ v))
        gm = self.G @ mu
        diff = float(np.sum(g.face_weights * self.m_f * gm * gm))
        w = mu + p.alpha * lam
        return visc + diff + float(np.sum(self.mr * w * w)) * g.cell_area


def residual_agg(z: StateAGG, prev: StateAGG, p: ModelParams, h: float) -> np.ndarray:
    sys = AGGSystem(prev, p, h)
    return sys.residual(sys.pack(z))


def assemble_jacobian_agg(z: StateAGG, prev: StateAGG, p: ModelParams, h: float) -> sp.csr_matrix:
    sys = AGGSystem(prev, p, h)
    return sys.jacobian(sys.pack(z))


def energy_tolerance(res_tol: float, prev_E: float) -> float:
    return 10 * res_tol * (1 + abs(prev_E))


MEAN_TOL = 1e-10


def solve_step(sys, x0, ncfg: NewtonConfig, kcfg: KrylovConfig, label: str):
    """Newton solve of one step, polished until the phase mean is conserved.

    The mean is conserved exactly by the discrete equations but only up to
    ``h`` times the residual by an approximate solution, which matters for
    large steps. A few extra Newton iterations fix that; if they cannot,
    the step is reported as a solver failure.
    """
    try:
        res = newton_solve(sys.residual, sys.jacobian, x0, ncfg, kcfg, barrier=sys.sphi)
    except NewtonError as exc:
        raise SolverFailure(f"{label}: {exc}", exc) from exc
    mean_k = sys.phik.mean()

    def drift(x):
        return abs(x[sys.sphi].mean() - mean_k)

    if drift(res.x) > MEAN_TOL:
        polish = dataclasses.replace(ncfg, res_tol=1e-6 * ncfg.res_tol, max_newton=4)
        try:
            extra = newton_solve(sys.residual, sys.jacobian, res.x, polish, kcfg, barrier=sys.sphi)
            x, iters, lin = extra.x, extra.iterations, extra.linear_iterations
        except NewtonError as exc:
            x, iters, lin = exc.best, polish.max_newton, 0
        if drift(x) > MEAN_TOL:
            raise SolverFailure(f"{label}: converged iterate changes the phase mean by {drift(x):.3e}; "
                                "the time step is too large for the residual tolerance")
        res = dataclasses.replace(res, x=x, iterations=res.iterations + iters,
                                  linear_iterations=res.linear_iterations + lin,
                                  residual=float(np.linalg.norm(sys.residual(x))))
    return res


def step_agg(prev: StateAGG, p: ModelParams, h: float, ncfg: NewtonConfig = NewtonConfig(),
             kcfg: KrylovConfig = KrylovConfig(), *, step: int = 1, time: float | None = None,
             check: bool = True):
    """Advance Model I by one step; returns ``(state, DiagRecord)``.

    Raises :class:`SolverFailure` when Newton fails and
    :class:`EnergyInequalityError` when the converged state violates the
    discrete energy inequality beyond ``10 res_tol (1 + |E_prev|)``.
    """
    sys = AGGSystem(prev, p, h)
    ncfg = dataclasses.replace(ncfg, eps_barrier=p.potential.eps_barrier)
    res = solve_step(sys, sys.pack(prev), ncfg, kcfg, f"Model I step {step}")
    try:
        new = sys.unpack(res.x)
    except ValueError as exc:
        raise SolverFailure(f"Model I step {step}: converged iterate is not admissible: {exc}", exc) from exc
    record = agg_record(prev, new, p, h, ncfg.res_tol, step=step, time=step * h if time is None else time,
                        newton_iters=res.iterations, linear_iters=res.linear_iterations)
    record.extras["lambda_multiplier"] = float(res.x[-1]) if sys.gauge else 0.0
    record.extras["residual"] = res.residual
    if check and not record.extras["passed"]:
        raise EnergyInequalityError(
            f"Model I step {step}: energy inequality violated (slack {record.energy_slack:.3e}, "
            f"tol {record.extras['tol']:.3e})", record)
    return new, record


def agg_record(prev: StateAGG, new: StateAGG, p: ModelParams, h: float, res_tol: float, *, step=1,
               time=0.0, newton_iters=0, linear_iters=0) -> dg.DiagRecord:
    g = new.grid
    e_free = dg.energy_free(new.phi, p)
    e_kin = dg.energy_kinetic(new.v, new.rho(p))
    e_prev = dg.energy_free(prev.phi, p) + dg.energy_kinetic(prev.v, prev.rho(p))
    dv = FaceField.from_faces(g, new.v.faces - prev.v.faces)
    increments = dg.energy_kinetic(dv, prev.rho(p)) + dg.gradient_energy(g, new.phi.values - prev.phi.values)
    D = dg.dissipation_agg(new, prev.phi, p)
    tol = energy_tolerance(res_tol, e_prev)
    rep = dg.check_step(e_prev, e_free + e_kin, increments, D, h, tol)
    mean, lo, hi = dg.phase_stats(new.phi)
    return dg.DiagRecord(step, time, e_free, e_kin, e_free + e_kin, D, mean, lo, hi, rep.slack,
                         newton_iters, linear_iters,
                         extras={"E_prev": e_prev, "increments": increments, "tol": tol, "passed": rep.passed})


def smooth_initial(phi_raw: Field, h: float, substeps: int = 1) -> Field:
    """Implicit-Euler heat flow with Neumann walls up to time ``h``.

    Preserves the mean exactly and does not increase the maximum norm; a
    nonconstant field with values in [-1, 1] comes out strictly inside.
    """
    g = phi_raw.grid
    vals = phi_raw.values
    if np.any(np.abs(vals) > 1):
        raise ValueError("initial phase field must satisfy |phi| <= 1")
    if substeps < 1 or not h >= 0:
        raise ValueError("need substeps >= 1 and h >= 0")
    if h == 0 or np.ptp(vals) == 0:
        return phi_raw
    dt = h / substeps
    lu = spla.splu((sp.identity(g.n_cells) - dt * g.laplacian).tocsc())
    u = phi_raw.flat.copy()
    for _ in range(substeps):
        u = lu.solve(u)
    # the solve is mean preserving up to rounding; restore it exactly
    u += phi_raw.flat.mean() - u.mean()
    return Field(g, u)
