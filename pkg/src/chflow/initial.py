"""Initial phase fields."""
from __future__ import annotations

import numpy as np

from .config import InitialCondition
from .grid import FaceField, Field, Grid
from .model_agg import smooth_initial
from .potential import clamp_barrier


def raw_profile(ic: InitialCondition, grid: Grid) -> np.ndarray:
    x, y = grid.cell_centers()
    if ic.kind == "uniform":
        return np.full(grid.shape, float(ic.m))
    if ic.kind == "random":
        rng = np.random.default_rng(ic.seed)
        return ic.m + ic.amplitude * rng.uniform(-1.0, 1.0, size=grid.shape)
    if ic.kind == "bubble":
        cx, cy = ic.center if ic.center is not None else (0.5 * grid.lx, 0.5 * grid.ly)
        if not (ic.radius < cx < grid.lx - ic.radius and ic.radius < cy < grid.ly - ic.radius):
            raise ValueError(f"bubble (center {(cx, cy)}, radius {ic.radius}) does not fit in the domain")
        return np.tanh((ic.radius - np.hypot(x - cx, y - cy)) / ic.width)
    if ic.kind == "stratified":
        height = 0.5 * grid.ly if ic.height is None else ic.height
        if not 0 < height < grid.ly:
            raise ValueError(f"interface height {height} outside (0, {grid.ly})")
        return np.tanh((y - height) / ic.width)
    raise ValueError(f"unknown initial condition kind {ic.kind!r}")


def make_initial(ic: InitialCondition, grid: Grid, eps: float = 1e-9) -> tuple[Field, FaceField]:
    """Phase field and (zero) velocity for ``ic``.

    The raw profile is optionally smoothed by heat flow and then kept at
    distance ``eps`` from the pure phases, where tanh saturates in floating
    point.
    """
    phi = Field(grid, raw_profile(ic, grid))
    if ic.smoothing_substeps > 0 and ic.smoothing_time > 0:
        phi = smooth_initial(phi, ic.smoothing_time, ic.smoothing_substeps)
    vals = clamp_barrier(phi.values, eps)
    mean = float(vals.mean())
    if not -1 < mean < 1:
        raise ValueError(f"initial mean {mean} must lie in (-1, 1)")
    return Field(grid, vals), FaceField.zeros(grid)
