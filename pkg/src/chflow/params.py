"""Material constants, phase-dependent coefficients, and derived quantities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import ConvexSplit, PotentialParams, kappa_min


@dataclass(frozen=True)
class Coefficient:
    """Quadratic coefficient law ``c0 + c1 s + c2 s^2`` on [-1, 1].

    Constants are ``Coefficient(c0)``; linear interpolation between the pure
    phases is ``Coefficient.between(minus, plus)``.
    """

    c0: float
    c1: float = 0.0
    c2: float = 0.0

    @classmethod
    def between(cls, minus: float, plus: float) -> Coefficient:
        return cls(0.5 * (plus + minus), 0.5 * (plus - minus))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.c0 + self.c1 * s + self.c2 * s * s

    def bounds(self) -> tuple[float, float]:
        pts = [-1.0, 1.0]
        if self.c2 != 0:
            v = -self.c1 / (2 * self.c2)
            if -1 < v < 1:
                pts.append(v)
        vals = [float(self(t)) for t in pts]
        return min(vals), max(vals)

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0 and self.c1 == 0 and self.c2 == 0


@dataclass(frozen=True)
class ModelParams:
    rho_plus: float
    rho_minus: float
    potential: PotentialParams
    kappa: float | None = None
    mobility: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    transition_mobility: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    viscosity: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    bulk_viscosity: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    gamma: float = 1.0
    matched_density: bool = False

    def __post_init__(self):
        issues = self.issues()
        if issues:
            raise ValueError("; ".join(issues))

    def issues(self) -> list[str]:
        out = []
        if not (self.rho_plus > 0 and self.rho_minus > 0):
            out.append(f"specific densities must be positive (rho_plus={self.rho_plus}, rho_minus={self.rho_minus})")
        elif self.rho_plus == self.rho_minus and not self.matched_density:
            out.append("rho_plus == rho_minus requires the matched_density flag")
        out += self.potential.admissibility_issues()
        if self.kappa is not None and self.kappa < kappa_min(self.potential):
            out.append(f"kappa={self.kappa} below the convexity threshold {kappa_min(self.potential)}")
        for name in ("mobility", "viscosity", "bulk_viscosity"):
            lo, _ = getattr(self, name).bounds()
            if not lo > 0:
                out.append(f"{name} must be bounded below by a positive constant on [-1, 1] (min={lo})")
        lo, _ = self.transition_mobility.bounds()
        if not (lo > 0 or self.transition_mobility.is_zero):
            out.append(f"transition_mobility must be positive on [-1, 1] or identically zero (min={lo})")
        return out

    @property
    def split(self) -> ConvexSplit:
        return ConvexSplit(kappa_min(self.potential) if self.kappa is None else self.kappa)

    @property
    def b_plus(self) -> float:
        return 0.5 * (self.rho_plus + self.rho_minus)

    @property
    def b_minus(self) -> float:
        return 0.5 * (self.rho_plus - self.rho_minus)

    @property
    def c_plus(self) -> float:
        return 1 / self.rho_plus + 1 / self.rho_minus

    @property
    def c_minus(self) -> float:
        return 1 / self.rho_plus - 1 / self.rho_minus

    @property
    def alpha(self) -> float:
        return self.c_minus / self.c_plus

    @property
    def beta(self) -> float:
        return 2 / (self.rho_plus + self.rho_minus)

    def rho(self, phi):
        return self.b_plus + self.b_minus * np.asarray(phi, dtype=float)

    @property
    def pressure_gauge(self) -> bool:
        """True when the pressure only enters through its gradient."""
        return self.alpha == 0 or self.transition_mobility.is_zero
