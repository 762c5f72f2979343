"""CSV diagnostics and legacy-VTK snapshots."""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .diagnostics import CSV_FIELDS, DiagRecord
from .grid import FaceField, Field

log = logging.getLogger(__name__)

_INT_FIELDS = {"step", "newton_iters", "linear_iters"}


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(records, path) -> bool:
    """Write ``records`` to ``path``; returns False (and writes nothing) if empty."""
    records = list(records)
    path = Path(path)
    if not records:
        log.warning("no diagnostic records; %s not written", path)
        return False
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for rec in records:
                w.writerow([_fmt(v) for v in rec.row()])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write diagnostics to {path}: {exc.strerror}") from exc
    return True


def read_csv(path) -> list[DiagRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [DiagRecord(**{k: int(r[k]) if k in _INT_FIELDS else float(r[k]) for k in CSV_FIELDS}) for r in rows]


def write_vtk(path, phi: Field, potential: Field, pressure: Field, velocity: FaceField,
              names: tuple[str, str] = ("mu", "lambda")) -> None:
    """Legacy ASCII ``STRUCTURED_POINTS`` file with cell data.

    ``names`` labels the potential and pressure scalars (``omega`` and
    ``lambda0`` for Model II).
    """
    g = phi.grid
    ux, uy = velocity.cell_centered()

    def order(a):
        # VTK expects x fastest
        return np.asarray(a).reshape(g.shape).T.ravel()

    lines = [
        "# vtk DataFile Version 3.0",
        "phase field snapshot",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.nx + 1} {g.ny + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {g.hx!r} {g.hy!r} 1",
        f"CELL_DATA {g.n_cells}",
    ]
    for name, f in (("phi", phi), (names[0], potential), (names[1], pressure)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [format(v, ".17g") for v in order(f.values)]
    lines.append("VECTORS velocity double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(order(ux), order(uy))]
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write snapshot {path}: {exc.strerror}") from exc
