"""Run configuration: an INI file with typed sections, validated exhaustively.

Grammar (every key optional unless noted, ``#`` and ``;`` start comments)::

    [model]
    kind = agg | qstokes            ; required
    matched_density = false

    [grid]
    nx = 32                         ; required
    ny = 32                         ; required
    lx = 1.0
    ly = 1.0

    [physics]
    rho_plus = 1.0                  ; required
    rho_minus = 0.5                 ; required
    theta = 1.0                     ; required
    theta_c = 2.0                   ; required
    kappa = <theta_c - theta>
    gamma = 1.0
    eps_barrier = 1e-9
    mobility = 1.0                  ; "c0" or "c0, c1" or "c0, c1, c2": c0 + c1 s + c2 s^2
    transition_mobility = 1.0
    viscosity = 1.0
    bulk_viscosity = 1.0

    [time]
    h = 1e-3                        ; required
    n_steps = 100                   ; required
    snapshot_every = 0              ; 0 disables intermediate snapshots

    [solver]
    res_tol = 1e-10
    max_newton = 50
    linear_method = gmres           ; gmres | bicgstab | cg | direct
    linear_rel_tol = 1e-12
    linear_max_iter = 500
    restart = 50

    [initial]
    kind = uniform | random | bubble | stratified   ; required
    m = 0.0                         ; uniform, random
    amplitude = 0.05                ; random
    seed = 0                        ; random
    center_x, center_y = 0.5 lx, 0.5 ly             ; bubble
    radius = 0.25                   ; bubble
    width = 0.05                    ; bubble, stratified
    height = 0.5 ly                 ; stratified
    smoothing_substeps = 0
    smoothing_time = 0.0

    [output]
    dir = out
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .grid import Grid
from .linsolve import METHODS, KrylovConfig, NewtonConfig
from .params import Coefficient, ModelParams
from .potential import PotentialParams

MODELS = ("agg", "qstokes")
IC_KINDS = ("uniform", "random", "bubble", "stratified")


@dataclass(frozen=True)
class ConfigIssue:
    key: str
    constraint: str
    value: object
    line: int | None = None

    def __str__(self) -> str:
        where = f" (line {self.line})" if self.line else ""
        return f"{self.key}{where}: {self.constraint} [value: {self.value!r}]"


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = list(issues)
        super().__init__("invalid configuration:\n  " + "\n  ".join(map(str, self.issues)))


@dataclass(frozen=True)
class InitialCondition:
    kind: str
    m: float = 0.0
    amplitude: float = 0.05
    seed: int = 0
    center: tuple[float, float] | None = None
    radius: float = 0.25
    width: float = 0.05
    height: float | None = None
    smoothing_substeps: int = 0
    smoothing_time: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    model: str
    grid: Grid
    params: ModelParams
    h: float
    n_steps: int
    initial: InitialCondition
    snapshot_every: int = 0
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    out_dir: Path = Path("out")


def model_issues(model: str, p: ModelParams) -> list[ConfigIssue]:
    """Constraints that depend on the chosen model."""
    out = []
    if model not in MODELS:
        out.append(ConfigIssue("model.kind", f"must be one of {MODELS}", model))
        return out
    if model == "qstokes":
        if not p.gamma > 0:
            out.append(ConfigIssue("physics.gamma", "friction must be positive for Navier slip", p.gamma))
        if p.rho_plus == p.rho_minus:
            out.append(ConfigIssue("physics.rho_minus", "qstokes needs rho_plus != rho_minus", p.rho_minus))
        if not p.transition_mobility.bounds()[0] > 0:
            out.append(ConfigIssue("physics.transition_mobility", "qstokes needs m_r > 0 on [-1, 1]",
                                   p.transition_mobility))
    return out


class _Reader:
    """Typed lookups that record every problem instead of stopping at the first."""

    def __init__(self, cp: configparser.ConfigParser, lines: dict[str, int]):
        self.cp = cp
        self.lines = lines
        self.issues: list[ConfigIssue] = []
        self.used: set[str] = set()

    def issue(self, key, constraint, value):
        self.issues.append(ConfigIssue(key, constraint, value, self.lines.get(key)))

    def raw(self, sec, key, required):
        name = f"{sec}.{key}"
        self.used.add(name)
        if self.cp.has_option(sec, key):
            return self.cp.get(sec, key).strip()
        if required:
            self.issue(name, "required key is missing", None)
        return None

    def get(self, sec, key, conv, default=None, required=False, check=None, constraint=""):
        text = self.raw(sec, key, required)
        if text is None:
            return default
        name = f"{sec}.{key}"
        try:
            value = conv(text)
        except ValueError:
            self.issue(name, f"expected {getattr(conv, '__name__', 'value')}", text)
            return default
        if check is not None and not check(value):
            self.issue(name, constraint, value)
        return value


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _coef(text: str) -> Coefficient:
    parts = [float(t) for t in text.replace(",", " ").split()]
    if not 1 <= len(parts) <= 3:
        raise ValueError(text)
    return Coefficient(*parts)


_bool.__name__ = "boolean"
_coef.__name__ = "1 to 3 numbers c0, c1, c2"


def _key_lines(text: str) -> dict[str, int]:
    lines, sec = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip().lower()
        elif sec and s and s[0] not in "#;":
            k = re.split(r"[=:]", s, 1)[0].strip().lower()
            lines.setdefault(f"{sec}.{k}", n)
    return lines


def parse_config_text(text: str) -> SimConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError([ConfigIssue("<file>", f"syntax error: {exc.message}", None, line)]) from exc
    r = _Reader(cp, _key_lines(text))
    pos = (lambda v: v > 0, "must be positive")
    posint = (lambda v: v >= 1, "must be >= 1")

    model = r.get("model", "kind", str, required=True, check=lambda v: v in MODELS,
                  constraint=f"must be one of {MODELS}")
    matched = r.get("model", "matched_density", _bool, False)

    nx = r.get("grid", "nx", int, 8, True, *posint)
    ny = r.get("grid", "ny", int, 8, True, *posint)
    lx = r.get("grid", "lx", float, 1.0, False, *pos)
    ly = r.get("grid", "ly", float, 1.0, False, *pos)

    rho_p = r.get("physics", "rho_plus", float, 1.0, True, *pos)
    rho_m = r.get("physics", "rho_minus", float, 1.0, True, *pos)
    theta = r.get("physics", "theta", float, 1.0, True, *pos)
    theta_c = r.get("physics", "theta_c", float, 2.0, True, *pos)
    eps = r.get("physics", "eps_barrier", float, 1e-9, False, lambda v: 0 < v < 1, "must lie in (0, 1)")
    kappa = r.get("physics", "kappa", float, None)
    gamma = r.get("physics", "gamma", float, 1.0, False, lambda v: v >= 0, "must be nonnegative")
    coefs = {k: r.get("physics", k, _coef, Coefficient(1.0))
             for k in ("mobility", "transition_mobility", "viscosity", "bulk_viscosity")}

    h = r.get("time", "h", float, 1e-3, True, *pos)
    n_steps = r.get("time", "n_steps", int, 1, True, lambda v: v >= 0, "must be >= 0")
    snap = r.get("time", "snapshot_every", int, 0, False, lambda v: v >= 0, "must be >= 0")

    res_tol = r.get("solver", "res_tol", float, 1e-10, False, *pos)
    max_newton = r.get("solver", "max_newton", int, 50, False, *posint)
    method = r.get("solver", "linear_method", str, "gmres", False, lambda v: v in METHODS,
                   f"must be one of {METHODS}")
    lin_tol = r.get("solver", "linear_rel_tol", float, 1e-12, False, *pos)
    lin_iter = r.get("solver", "linear_max_iter", int, 500, False, *posint)
    restart = r.get("solver", "restart", int, 50, False, *posint)

    ic_kind = r.get("initial", "kind", str, "uniform", True, lambda v: v in IC_KINDS,
                    f"must be one of {IC_KINDS}")
    ic = InitialCondition(
        kind=ic_kind,
        m=r.get("initial", "m", float, 0.0, False, lambda v: -1 < v < 1, "mean must lie in (-1, 1)"),
        amplitude=r.get("initial", "amplitude", float, 0.05, False, lambda v: v >= 0, "must be nonnegative"),
        seed=r.get("initial", "seed", int, 0),
        center=(r.get("initial", "center_x", float, 0.5 * lx), r.get("initial", "center_y", float, 0.5 * ly)),
        radius=r.get("initial", "radius", float, 0.25, False, *pos),
        width=r.get("initial", "width", float, 0.05, False, *pos),
        height=r.get("initial", "height", float, 0.5 * ly),
        smoothing_substeps=r.get("initial", "smoothing_substeps", int, 0, False, lambda v: v >= 0,
                                 "must be >= 0"),
        smoothing_time=r.get("initial", "smoothing_time", float, 0.0, False, lambda v: v >= 0,
                             "must be >= 0"),
    )
    out_dir = Path(r.get("output", "dir", str, "out"))

    for sec in cp.sections():
        for key in cp.options(sec):
            if f"{sec}.{key}" not in r.used:
                r.issue(f"{sec}.{key}", "unknown key", cp.get(sec, key))

    # physics constraints, all collected
    if theta > 0 and theta_c > 0 and not theta < theta_c:
        r.issue("physics.theta_c", "0 < theta < theta_c violated", theta_c)
    if rho_p == rho_m and not matched:
        r.issue("physics.rho_minus", "rho_plus == rho_minus requires model.matched_density = true", rho_m)
    if kappa is not None and theta > 0 and theta_c > 0 and kappa < max(theta_c - theta, 0.0):
        r.issue("physics.kappa", f"must be >= theta_c - theta = {theta_c - theta} (convex split)", kappa)
    for name in ("mobility", "viscosity", "bulk_viscosity"):
        lo = coefs[name].bounds()[0]
        if not lo > 0:
            r.issue(f"physics.{name}", "must be positive on [-1, 1]", coefs[name])
    mr = coefs["transition_mobility"]
    if not (mr.bounds()[0] > 0 or mr.is_zero):
        r.issue("physics.transition_mobility", "must be positive on [-1, 1] or identically zero", mr)
    if ic_kind == "random" and not abs(ic.m) + ic.amplitude < 1:
        r.issue("initial.amplitude", "|m| + amplitude must be < 1", ic.amplitude)
    if ic_kind == "bubble":
        cx, cy = ic.center
        if not (ic.radius < cx < lx - ic.radius and ic.radius < cy < ly - ic.radius):
            r.issue("initial.radius", "bubble must lie inside the domain", (cx, cy, ic.radius))
    if ic_kind == "stratified" and not 0 < ic.height < ly:
        r.issue("initial.height", "interface height must lie in (0, ly)", ic.height)

    if r.issues:
        raise ConfigError(r.issues)

    pot = PotentialParams(theta, theta_c, eps)
    params = ModelParams(rho_p, rho_m, pot, kappa, gamma=gamma, matched_density=matched, **coefs)
    issues = model_issues(model, params)
    for it in issues:
        r.issue(it.key, it.constraint, it.value)
    if r.issues:
        raise ConfigError(r.issues)
    return SimConfig(
        model=model, grid=Grid(nx, ny, lx, ly), params=params, h=h, n_steps=n_steps, initial=ic,
        snapshot_every=snap,
        newton=NewtonConfig(res_tol=res_tol, max_newton=max_newton, eps_barrier=eps),
        krylov=KrylovConfig(method=method, rel_tol=lin_tol, max_iter=lin_iter, restart=restart),
        out_dir=out_dir,
    )


def parse_config(path) -> SimConfig:
    """Read and validate a configuration file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([ConfigIssue("<file>", f"cannot read {path}: {exc.strerror}", str(path))]) from exc
    return parse_config_text(text)
