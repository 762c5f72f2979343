"""Sparse Krylov solvers, a dense direct oracle, and a safeguarded Newton driver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import SparseOperator

log = logging.getLogger(__name__)

METHODS = ("cg", "bicgstab", "gmres", "direct")


class LinearSolveError(RuntimeError):
    """Linear solve failed; ``x`` is the best iterate and ``residual`` its norm."""

    def __init__(self, message, x=None, residual=np.inf):
        super().__init__(message)
        self.x = x
        self.residual = residual


class SingularMatrixError(LinearSolveError):
    def __init__(self, message, cond=np.inf):
        super().__init__(message)
        self.cond = cond


class NewtonError(RuntimeError):
    """Newton did not reach the tolerance; carries the best iterate."""

    def __init__(self, message, best=None, residual=np.inf, history=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.history = history or []


class BarrierStarvation(NewtonError):
    """Every trial step violated the phase-field barrier until the step underflowed."""


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "gmres"
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iter: int = 500
    restart: int = 50
    # fall back to a sparse LU when the Krylov method stalls
    fallback_direct: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown linear method {self.method!r}; choose from {METHODS}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be positive")
        if self.max_iter < 1 or self.restart < 1:
            raise ValueError("max_iter and restart must be >= 1")


@dataclass(frozen=True)
class NewtonConfig:
    res_tol: float = 1e-10
    max_newton: int = 50
    backtrack: float = 0.5
    max_halvings: int = 40
    eps_barrier: float = 1e-9

    def __post_init__(self):
        if not self.res_tol > 0 or self.max_newton < 1:
            raise ValueError("res_tol must be positive and max_newton >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")


@dataclass
class LinearSolution:
    x: np.ndarray
    iterations: int
    residual: float


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    linear_iterations: int
    residual: float
    initial_residual: float
    history: list[float] = field(default_factory=list)


def _matrix(A):
    if isinstance(A, SparseOperator):
        return A.matrix
    return sp.csr_matrix(A)


def _ilu(A: sp.csr_matrix):
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-6, fill_factor=30)
    except RuntimeError:
        return None
    return spla.LinearOperator(A.shape, ilu.solve)


def _jacobi(A: sp.csr_matrix):
    d = A.diagonal()
    if np.any(d == 0):
        return None
    return spla.LinearOperator(A.shape, lambda x: x / d)


def _direct(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse LU failed: {exc}") from exc
    return lu.solve(b)


def solve_sparse(A, b, cfg: KrylovConfig = KrylovConfig(), x0=None) -> LinearSolution:
    """Solve ``A x = b``; raise :class:`LinearSolveError` unless the true residual
    satisfies ``|Ax - b| <= rel_tol |b| + abs_tol``."""
    A = _matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m or b.shape != (n,):
        raise ValueError(f"dimension mismatch: A is {A.shape}, b is {b.shape}")
    bnorm = np.linalg.norm(b)
    target = cfg.rel_tol * bnorm + cfg.abs_tol
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    if cfg.method == "direct":
        x = _direct(A, b)
        iters = 1
    else:
        kw = dict(rtol=cfg.rel_tol, atol=cfg.abs_tol, maxiter=cfg.max_iter, x0=x0, callback=count)
        if cfg.method == "cg":
            x, info = spla.cg(A, b, M=_jacobi(A), **kw)
        elif cfg.method == "bicgstab":
            x, info = spla.bicgstab(A, b, M=_ilu(A), **kw)
        else:
            x, info = spla.gmres(A, b, M=_ilu(A), restart=cfg.restart, callback_type="pr_norm", **kw)
        if info < 0:
            raise LinearSolveError(f"{cfg.method}: breakdown (info={info})", x, np.linalg.norm(A @ x - b))
    res = float(np.linalg.norm(A @ x - b)) if np.all(np.isfinite(x)) else np.inf
    if not res <= target:
        msg = f"{cfg.method}: residual {res:.3e} above target {target:.3e} after {iters} iterations"
        if cfg.method == "cg":
            msg += " (cg requires a symmetric positive definite matrix)"
        raise LinearSolveError(msg, x, res)
    return LinearSolution(x, iters, res)


def solve_dense_oracle(A, b) -> np.ndarray:
    """Dense LU solve with a reciprocal-condition check."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"dimension mismatch: A is {A.shape}, b is {b.shape}")
    if n > 4000:
        raise ValueError("dense oracle is limited to 4000 unknowns")
    lu, piv, info = sla.lapack.dgetrf(A)
    if info > 0:
        raise SingularMatrixError(f"exactly singular pivot at row {info - 1}", cond=np.inf)
    anorm = np.linalg.norm(A, 1)
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    if rcond < 1e3 * np.finfo(float).eps:
        raise SingularMatrixError(f"matrix is numerically singular (cond ~ {1 / max(rcond, 1e-300):.3e})",
                                  cond=1 / max(rcond, 1e-300))
    return sla.lu_solve((lu, piv), b)


def _linear_step(J, r, kcfg: KrylovConfig) -> LinearSolution:
    try:
        return solve_sparse(J, -r, kcfg)
    except LinearSolveError:
        if not kcfg.fallback_direct or kcfg.method == "direct":
            raise
        log.debug("%s did not converge; falling back to sparse LU", kcfg.method)
        sol = solve_sparse(J, -r, KrylovConfig(method="direct", rel_tol=kcfg.rel_tol, abs_tol=kcfg.abs_tol))
        return sol


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], object],
    x0: np.ndarray,
    ncfg: NewtonConfig = NewtonConfig(),
    kcfg: KrylovConfig = KrylovConfig(),
    barrier: np.ndarray | slice | None = None,
    solve: Callable | None = None,
) -> NewtonResult:
    """Damped Newton iteration with a box barrier on ``x[barrier]``.

    Entries selected by ``barrier`` are clamped into ``[-1 + eps, 1 - eps]``
    before the first residual evaluation and every trial step leaving that box
    is halved. Steps must also reduce ``|r|`` (Armijo test on the 2-norm).
    Converged when ``|r| <= res_tol (1 + |r(x0)|)``.

    ``solve(J, r)`` may replace the linear solve; it must return a
    :class:`LinearSolution` for ``J dx = -r``.
    """
    eps = ncfg.eps_barrier
    x = np.array(x0, dtype=float)
    if barrier is not None:
        x[barrier] = np.clip(x[barrier], -1 + eps, 1 - eps)

    def inside(z):
        if barrier is None:
            return True
        return bool(np.all(np.abs(z[barrier]) <= 1 - eps))

    solve = solve or (lambda J, r: _linear_step(J, r, kcfg))
    r = residual(x)
    rnorm = float(np.linalg.norm(r))
    r0 = rnorm
    tol = ncfg.res_tol * (1 + r0)
    history = [rnorm]
    lin_iters = 0
    for it in range(ncfg.max_newton + 1):
        if rnorm <= tol:
            return NewtonResult(x, it, lin_iters, rnorm, r0, history)
        if it == ncfg.max_newton:
            break
        try:
            sol = solve(jacobian(x), r)
        except LinearSolveError as exc:
            raise NewtonError(f"linear solve failed in Newton iteration {it}: {exc}", x, rnorm, history) from exc
        lin_iters += sol.iterations
        dx = sol.x
        t = 1.0
        blocked = 0
        for _ in range(ncfg.max_halvings + 1):
            xt = x + t * dx
            if not inside(xt):
                blocked += 1
            else:
                rt = residual(xt)
                nt = float(np.linalg.norm(rt))
                if np.isfinite(nt) and (nt <= (1 - 1e-4 * t) * rnorm or nt <= tol):
                    break
            t *= ncfg.backtrack
        else:
            if blocked:
                raise BarrierStarvation(
                    f"line search starved at the barrier in Newton iteration {it} "
                    f"({blocked} blocked trials)", x, rnorm, history)
            raise NewtonError(f"line search found no decrease in Newton iteration {it}", x, rnorm, history)
        x, r, rnorm = xt, rt, nt
        history.append(rnorm)
    raise NewtonError(f"no convergence in {ncfg.max_newton} Newton iterations "
                      f"(|r| = {rnorm:.3e}, tol = {tol:.3e})", x, rnorm, history)
