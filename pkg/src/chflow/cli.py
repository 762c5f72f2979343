"""Batch driver: ``chflow --config run.ini [--model agg|qstokes] [--steps N] ...``"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from contextlib import nullcontext

import numpy as np
from threadpoolctl import threadpool_limits

from . import diagnostics as dg
from .config import ConfigError, ConfigIssue, SimConfig, model_issues, parse_config
from .grid import NoSlip, Field, assemble_viscous_form
from .initial import make_initial
from .model_agg import EnergyInequalityError, SolverFailure, initial_state_agg, step_agg
from .model_qstokes import initial_state_qs, step_qstokes
from .output import write_csv, write_vtk

log = logging.getLogger("chflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
MEAN_TOL = 1e-10


class InvariantViolation(RuntimeError):
    pass


def snapshot_steps(n_steps: int, every: int) -> list[int]:
    """Steps at which snapshots are written: 0, multiples of ``every``, and the last."""
    steps = {0, n_steps}
    if every > 0:
        steps.update(range(0, n_steps + 1, every))
    return sorted(steps)


def initial_record(cfg: SimConfig, state) -> dg.DiagRecord:
    p = cfg.params
    e_free = dg.energy_free(state.phi, p)
    e_kin = dg.energy_kinetic(state.v, state.rho(p)) if cfg.model == "agg" else 0.0
    mean, lo, hi = dg.phase_stats(state.phi)
    return dg.DiagRecord(0, 0.0, e_free, e_kin, e_free + e_kin, 0.0, mean, lo, hi, 0.0, 0, 0)


def _snapshot(cfg: SimConfig, state, step: int) -> None:
    path = cfg.out_dir / f"snapshot_{step:06d}.vtk"
    if cfg.model == "agg":
        write_vtk(path, state.phi, state.mu, state.lam, state.v, ("mu", "lambda"))
    else:
        write_vtk(path, state.phi, state.omega, state.lambda0, state.u, ("omega", "lambda0"))


def _check_record(rec: dg.DiagRecord, mean0: float) -> None:
    if not (rec.min_phi > -1 and rec.max_phi < 1):
        raise InvariantViolation(f"step {rec.step}: phase field left (-1, 1): [{rec.min_phi}, {rec.max_phi}]")
    if abs(rec.mean_phi - mean0) > MEAN_TOL:
        raise InvariantViolation(f"step {rec.step}: mean drift {rec.mean_phi - mean0:.3e}")
    if rec.D < -1e-13:
        raise InvariantViolation(f"step {rec.step}: negative dissipation {rec.D:.3e}")


def run_simulation(cfg: SimConfig, write: bool = True) -> tuple[int, list[dg.DiagRecord]]:
    """Run the time loop; returns ``(exit status, records)``.

    The CSV is written for all executed steps even when the run aborts.
    """
    phi0, v0 = make_initial(cfg.initial, cfg.grid, cfg.params.potential.eps_barrier)
    if cfg.model == "agg":
        state = initial_state_agg(phi0, cfg.params, v0)
        stepper = step_agg
    else:
        state = initial_state_qs(phi0)
        stepper = step_qstokes
    records = [initial_record(cfg, state)]
    mean0 = records[0].mean_phi
    snaps = set(snapshot_steps(cfg.n_steps, cfg.snapshot_every))
    status = EXIT_OK
    if write:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        _snapshot(cfg, state, 0)
    try:
        for k in range(1, cfg.n_steps + 1):
            state, rec = stepper(state, cfg.params, cfg.h, cfg.newton, cfg.krylov, step=k, time=k * cfg.h)
            records.append(rec)
            _check_record(rec, mean0)
            log.info("step %d: E_tot=%.10g D=%.4g slack=%.3e newton=%d", k, rec.E_tot, rec.D,
                     rec.energy_slack, rec.newton_iters)
            if write and k in snaps:
                _snapshot(cfg, state, k)
    except SolverFailure as exc:
        log.error("solver failure: %s", exc)
        status = EXIT_SOLVER
    except (EnergyInequalityError, InvariantViolation) as exc:
        if isinstance(exc, EnergyInequalityError) and exc.record is not None:
            records.append(exc.record)
        log.error("invariant violation: %s", exc)
        status = EXIT_INVARIANT
    if write:
        write_csv(records, cfg.out_dir / "diagnostics.csv")
    return status, records


def check_only(cfg: SimConfig) -> list[str]:
    """Structural checks on the configured grid and initial state; no output."""
    g, p = cfg.grid, cfg.params
    problems = []
    f = g.interior_faces
    G, D, L = g.grad[f], g.div[:, f], g.laplacian
    if abs(D + G.T).max() > 1e-13 * max(1.0, abs(D).max()):
        problems.append("div != -grad^T on fields with zero normal flux")
    if abs(L - L.T).max() > 1e-13:
        problems.append("Laplacian not symmetric")
    phi0, _ = make_initial(cfg.initial, g, p.potential.eps_barrier)
    if not np.all(np.abs(phi0.values) < 1):
        problems.append("initial phase field not strictly inside (-1, 1)")
    if not -1 < phi0.values.mean() < 1:
        problems.append("initial mean outside (-1, 1)")
    lo = float(phi0.values.min())
    nu, eta = Field(g, p.viscosity(phi0.values)), Field(g, p.bulk_viscosity(phi0.values))
    A = assemble_viscous_form(nu, eta, NoSlip()).matrix
    if abs(A - A.T).max() > 1e-13 * max(1.0, abs(A).max()):
        problems.append("viscous form not symmetric")
    e = dg.energy_free(phi0, p)
    if not np.isfinite(e):
        problems.append(f"free energy of the initial state is not finite (min phi {lo})")
    return problems


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chflow", description="Two-phase flow with phase transition: batch driver")
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--model", choices=("agg", "qstokes"), help="override the configured model")
    ap.add_argument("--steps", type=int, help="override the number of time steps")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--seed", type=int, help="override the random initial-condition seed")
    ap.add_argument("--check-only", action="store_true", help="validate the configuration and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def apply_overrides(cfg: SimConfig, args) -> SimConfig:
    issues: list[ConfigIssue] = []
    changes = {}
    if args.model:
        changes["model"] = args.model
        issues += model_issues(args.model, cfg.params)
    if args.steps is not None:
        if args.steps < 0:
            issues.append(ConfigIssue("--steps", "must be >= 0", args.steps))
        changes["n_steps"] = args.steps
    if args.out:
        changes["out_dir"] = type(cfg.out_dir)(args.out)
    if args.seed is not None:
        changes["initial"] = dataclasses.replace(cfg.initial, seed=args.seed)
    if issues:
        raise ConfigError(issues)
    return dataclasses.replace(cfg, **changes)


def _thread_limit():
    raw = os.environ.get("PHASEFIELD_THREADS")
    if raw is None or raw == "":
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError([ConfigIssue("PHASEFIELD_THREADS", "must be a positive integer", raw)])
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(parse_config(args.config), args)
        limit = _thread_limit()
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    with limit:
        if args.check_only:
            try:
                problems = check_only(cfg)
            except ValueError as exc:
                print(f"invalid configuration: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            for msg in problems:
                print(f"check failed: {msg}", file=sys.stderr)
            return EXIT_INVARIANT if problems else EXIT_OK
        try:
            status, records = run_simulation(cfg)
        except OSError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
    last = records[-1]
    print(f"{cfg.model}: {last.step} steps, E_tot={last.E_tot:.12g}, status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
