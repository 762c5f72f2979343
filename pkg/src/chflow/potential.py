"""Logarithmic (Flory-Huggins type) free energy density and its convex split.

``F(s) = theta/2 [(1+s) ln(1+s) + (1-s) ln(1-s)] + theta_c/2 (1 - s^2)``

The convex part is ``F0(s) = F(s) + kappa/2 s^2``; with ``kappa >= theta_c - theta``
it is convex on (-1, 1), which is what the implicit steppers rely on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy


class BarrierViolation(ValueError):
    """An argument came too close to the singularities at +-1."""


@dataclass(frozen=True)
class PotentialParams:
    theta: float
    theta_c: float
    eps_barrier: float = 1e-9

    def __post_init__(self):
        if not (self.theta > 0 and self.theta_c > 0):
            raise ValueError(f"theta and theta_c must be positive, got {self.theta}, {self.theta_c}")
        if not 0 < self.eps_barrier < 1:
            raise ValueError(f"eps_barrier must lie in (0, 1), got {self.eps_barrier}")

    def admissibility_issues(self) -> list[str]:
        if not self.theta < self.theta_c:
            return [f"0 < theta < theta_c violated (theta={self.theta}, theta_c={self.theta_c})"]
        return []


@dataclass(frozen=True)
class ConvexSplit:
    kappa: float

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")

    @classmethod
    def minimal(cls, p: PotentialParams) -> ConvexSplit:
        return cls(kappa_min(p))


def kappa_min(p: PotentialParams) -> float:
    # F''(s) = theta/(1-s^2) - theta_c is smallest at s = 0
    return max(p.theta_c - p.theta, 0.0)


def f_log(s, p: PotentialParams):
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) > 1):
        raise ValueError("f_log is defined on [-1, 1] only")
    mix = xlogy(1 + s, 1 + s) + xlogy(1 - s, 1 - s)
    out = 0.5 * p.theta * mix + 0.5 * p.theta_c * (1 - s * s)
    return out if out.ndim else float(out)


def f_log_prime(s, p: PotentialParams):
    """F'(s) on the open interval (no barrier check)."""
    s = np.asarray(s, dtype=float)
    out = 0.5 * p.theta * np.log((1 + s) / (1 - s)) - p.theta_c * s
    return out if out.ndim else float(out)


def _check_barrier(s, p: PotentialParams):
    lim = 1 - 0.5 * p.eps_barrier
    if np.any(np.abs(s) >= lim) or not np.all(np.isfinite(s)):
        worst = float(np.max(np.abs(s))) if np.size(s) else float("nan")
        raise BarrierViolation(f"|s| = {worst!r} reached the barrier {lim!r}")


def f0(s, p: PotentialParams, k: ConvexSplit):
    s = np.asarray(s, dtype=float)
    out = f_log(s, p) + 0.5 * k.kappa * s * s
    return out if np.ndim(out) else float(out)


def f0_prime(s, p: PotentialParams, k: ConvexSplit):
    s = np.asarray(s, dtype=float)
    _check_barrier(s, p)
    out = 0.5 * p.theta * (np.log1p(s) - np.log1p(-s)) + (k.kappa - p.theta_c) * s
    return out if out.ndim else float(out)


def f0_second(s, p: PotentialParams, k: ConvexSplit):
    s = np.asarray(s, dtype=float)
    _check_barrier(s, p)
    out = p.theta / ((1 - s) * (1 + s)) - p.theta_c + k.kappa
    return out if out.ndim else float(out)


def clamp_barrier(s, eps: float):
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    out = np.minimum(np.maximum(s, -1 + eps), 1 - eps)
    return out if np.ndim(out) else float(out)

