"""Rectangular staggered (MAC) grid and its discrete operators.

Scalars live at cell centres and velocity components on the faces normal to
them. Tangential wall velocities, needed only for slip conditions, live on the
grid nodes along each wall.

Flat layouts used throughout the package:

* cells: ``i * ny + j`` for cell ``(i, j)``;
* faces: all x-faces ``(nx + 1, ny)`` followed by all y-faces ``(nx, ny + 1)``;
* extended velocity: faces followed by the wall-node tangential values
  (bottom, top: ``nx + 1`` each; left, right: ``ny + 1`` each).

Gradient rows on boundary faces are zero (homogeneous Neumann), which makes
``div[:, interior] == -grad[interior, :].T`` hold exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError(f"cell counts must be integers, got nx={self.nx}, ny={self.ny}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need at least 2 cells per axis, got nx={self.nx}, ny={self.ny}")
        if not (self.lx > 0 and self.ly > 0) or not np.isfinite([self.lx, self.ly]).all():
            raise ValueError(f"domain lengths must be positive, got lx={self.lx}, ly={self.ly}")

    # -- sizes -------------------------------------------------------------
    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_xfaces(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_yfaces(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_faces(self) -> int:
        return self.n_xfaces + self.n_yfaces

    @property
    def n_wall(self) -> int:
        return 2 * (self.nx + 1) + 2 * (self.ny + 1)

    @property
    def n_ext(self) -> int:
        return self.n_faces + self.n_wall

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    # -- coordinates -------------------------------------------------------
    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xface_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yface_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    # -- index maps --------------------------------------------------------
    def xface_index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def yface_index(self, i, j):
        return self.n_xfaces + np.asarray(i) * (self.ny + 1) + np.asarray(j)

    def cell_index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def wall_index(self, side: str, k):
        k = np.asarray(k)
        base = self.n_faces
        if side == "bottom":
            return base + k
        if side == "top":
            return base + (self.nx + 1) + k
        if side == "left":
            return base + 2 * (self.nx + 1) + k
        if side == "right":
            return base + 2 * (self.nx + 1) + (self.ny + 1) + k
        raise ValueError(f"unknown wall side {side!r}")

    @cached_property
    def interior_faces(self) -> np.ndarray:
        """Face indices whose normal velocity is free under v.n = 0."""
        i, j = np.meshgrid(np.arange(1, self.nx), np.arange(self.ny), indexing="ij")
        xs = self.xface_index(i, j).ravel()
        i, j = np.meshgrid(np.arange(self.nx), np.arange(1, self.ny), indexing="ij")
        ys = self.yface_index(i, j).ravel()
        return np.concatenate([xs, ys])

    @cached_property
    def wall_dofs(self) -> np.ndarray:
        """Extended indices of tangential wall values away from the corners."""
        kx = np.arange(1, self.nx)
        ky = np.arange(1, self.ny)
        return np.concatenate([
            self.wall_index("bottom", kx), self.wall_index("top", kx),
            self.wall_index("left", ky), self.wall_index("right", ky),
        ])

    @cached_property
    def slip_dofs(self) -> np.ndarray:
        return np.concatenate([self.interior_faces, self.wall_dofs])

    @cached_property
    def face_weights(self) -> np.ndarray:
        """Trapezoid weights: full cell area inside, half on boundary faces."""
        w = np.full(self.n_faces, self.cell_area)
        j = np.arange(self.ny)
        w[self.xface_index(0, j)] *= 0.5
        w[self.xface_index(self.nx, j)] *= 0.5
        i = np.arange(self.nx)
        w[self.yface_index(i, 0)] *= 0.5
        w[self.yface_index(i, self.ny)] *= 0.5
        return w

    @cached_property
    def wall_weights(self) -> np.ndarray:
        """Trapezoid line weights for the wall-node tangential values."""
        bx = np.full(self.nx + 1, self.hx)
        bx[[0, -1]] *= 0.5
        by = np.full(self.ny + 1, self.hy)
        by[[0, -1]] *= 0.5
        return np.concatenate([bx, bx, by, by])

    # -- operators ---------------------------------------------------------
    @cached_property
    def grad(self) -> sp.csr_matrix:
        """Cell-to-face gradient, zero on boundary faces."""
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        i, j = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        rx = self.xface_index(i, j).ravel()
        hi_x, lo_x = self.cell_index(i, j).ravel(), self.cell_index(i - 1, j).ravel()
        i, j = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
        ry = self.yface_index(i, j).ravel()
        hi_y, lo_y = self.cell_index(i, j).ravel(), self.cell_index(i, j - 1).ravel()
        rows = np.concatenate([rx, rx, ry, ry])
        cols = np.concatenate([hi_x, lo_x, hi_y, lo_y])
        vals = np.concatenate([
            np.full(rx.size, 1 / hx), np.full(rx.size, -1 / hx),
            np.full(ry.size, 1 / hy), np.full(ry.size, -1 / hy),
        ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_faces, self.n_cells))

    @cached_property
    def div(self) -> sp.csr_matrix:
        """Face-to-cell conservative flux difference."""
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        c = self.cell_index(i, j).ravel()
        rows = np.concatenate([c, c, c, c])
        cols = np.concatenate([
            self.xface_index(i + 1, j).ravel(), self.xface_index(i, j).ravel(),
            self.yface_index(i, j + 1).ravel(), self.yface_index(i, j).ravel(),
        ])
        vals = np.concatenate([
            np.full(c.size, 1 / hx), np.full(c.size, -1 / hx),
            np.full(c.size, 1 / hy), np.full(c.size, -1 / hy),
        ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_cells, self.n_faces))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (self.div @ self.grad).tocsr()

    @cached_property
    def face_avg(self) -> sp.csr_matrix:
        """Arithmetic mean of the adjacent cells; boundary faces copy their cell."""
        nx, ny = self.nx, self.ny
        rows, cols, vals = [], [], []
        i, j = np.meshgrid(np.arange(1, nx), np.arange(ny), indexing="ij")
        r = self.xface_index(i, j).ravel()
        rows += [r, r]
        cols += [self.cell_index(i, j).ravel(), self.cell_index(i - 1, j).ravel()]
        vals += [np.full(r.size, 0.5)] * 2
        j = np.arange(ny)
        rows += [self.xface_index(0, j), self.xface_index(nx, j)]
        cols += [self.cell_index(0, j), self.cell_index(nx - 1, j)]
        vals += [np.ones(ny)] * 2
        i, j = np.meshgrid(np.arange(nx), np.arange(1, ny), indexing="ij")
        r = self.yface_index(i, j).ravel()
        rows += [r, r]
        cols += [self.cell_index(i, j).ravel(), self.cell_index(i, j - 1).ravel()]
        vals += [np.full(r.size, 0.5)] * 2
        i = np.arange(nx)
        rows += [self.yface_index(i, 0), self.yface_index(i, ny)]
        cols += [self.cell_index(i, 0), self.cell_index(i, ny - 1)]
        vals += [np.ones(nx)] * 2
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_cells),
        )

    @cached_property
    def node_avg(self) -> sp.csr_matrix:
        """Mean of the (up to four) cells touching each grid node."""
        nx, ny = self.nx, self.ny
        rows, cols = [], []
        ni, nj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        node = (ni * (ny + 1) + nj).ravel()
        ni, nj = ni.ravel(), nj.ravel()
        for di in (-1, 0):
            for dj in (-1, 0):
                ci, cj = ni + di, nj + dj
                ok = (ci >= 0) & (ci < nx) & (cj >= 0) & (cj < ny)
                rows.append(node[ok])
                cols.append(self.cell_index(ci[ok], cj[ok]))
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        counts = np.bincount(rows, minlength=(nx + 1) * (ny + 1))
        vals = 1.0 / counts[rows]
        return sp.csr_matrix((vals, (rows, cols)), shape=((nx + 1) * (ny + 1), self.n_cells))

    @cached_property
    def node_weights(self) -> np.ndarray:
        cx = np.full(self.nx + 1, self.hx)
        cx[[0, -1]] *= 0.5
        cy = np.full(self.ny + 1, self.hy)
        cy[[0, -1]] *= 0.5
        return np.outer(cx, cy).ravel()

    @cached_property
    def strain_ops(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        """``(exx, eyy, shear)`` acting on extended velocity vectors.

        ``exx`` and ``eyy`` give the normal strain rates at cell centres,
        ``shear`` gives ``du/dy + dv/dx`` at the grid nodes, using the wall
        tangential values over a half-cell distance on the boundary.
        """
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        n_nodes = (nx + 1) * (ny + 1)
        pad = sp.csr_matrix((self.n_cells, self.n_wall))
        d = self.div
        exx = sp.hstack([d[:, : self.n_xfaces], sp.csr_matrix((self.n_cells, self.n_yfaces)), pad]).tocsr()
        eyy = sp.hstack([sp.csr_matrix((self.n_cells, self.n_xfaces)), d[:, self.n_xfaces:], pad]).tocsr()

        def node(i, j):
            return np.asarray(i) * (ny + 1) + np.asarray(j)

        rows, cols, vals = [], [], []

        def add(r, c, v):
            r = np.atleast_1d(r).ravel()
            rows.append(r)
            cols.append(np.broadcast_to(np.asarray(c).ravel(), r.shape))
            vals.append(np.broadcast_to(np.asarray(v, dtype=float), r.shape))

        # du/dy
        i, j = np.meshgrid(np.arange(nx + 1), np.arange(1, ny), indexing="ij")
        add(node(i, j), self.xface_index(i, j), 1 / hy)
        add(node(i, j), self.xface_index(i, j - 1), -1 / hy)
        i = np.arange(nx + 1)
        add(node(i, 0), self.xface_index(i, 0), 2 / hy)
        add(node(i, 0), self.wall_index("bottom", i), -2 / hy)
        add(node(i, ny), self.wall_index("top", i), 2 / hy)
        add(node(i, ny), self.xface_index(i, ny - 1), -2 / hy)
        # dv/dx
        i, j = np.meshgrid(np.arange(1, nx), np.arange(ny + 1), indexing="ij")
        add(node(i, j), self.yface_index(i, j), 1 / hx)
        add(node(i, j), self.yface_index(i - 1, j), -1 / hx)
        j = np.arange(ny + 1)
        add(node(0, j), self.yface_index(0, j), 2 / hx)
        add(node(0, j), self.wall_index("left", j), -2 / hx)
        add(node(nx, j), self.wall_index("right", j), 2 / hx)
        add(node(nx, j), self.yface_index(nx - 1, j), -2 / hx)
        shear = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_nodes, self.n_ext),
        )
        return exx, eyy, shear

    def embed(self, dofs: np.ndarray, size: int | None = None) -> sp.csr_matrix:
        """Selection matrix mapping a dof vector into a larger layout."""
        size = self.n_faces if size is None else size
        return sp.csr_matrix(
            (np.ones(dofs.size), (dofs, np.arange(dofs.size))), shape=(size, dofs.size)
        )


@dataclass(frozen=True, eq=False)
class Field:
    """Cell-centred scalar field."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.isfinite(vals).all():
            raise ValueError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> Field:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> Field:
        x, y = grid.cell_centers()
        return cls(grid, np.broadcast_to(fn(x, y), grid.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True, eq=False)
class FaceField:
    """Face-staggered vector field plus optional tangential wall values."""

    grid: Grid
    x: np.ndarray
    y: np.ndarray
    wall: np.ndarray = field(default=None)

    def __post_init__(self):
        g = self.grid
        x = np.array(self.x, dtype=float).reshape(g.nx + 1, g.ny)
        y = np.array(self.y, dtype=float).reshape(g.nx, g.ny + 1)
        wall = np.zeros(g.n_wall) if self.wall is None else np.array(self.wall, dtype=float).reshape(g.n_wall)
        for name, a in (("x", x), ("y", y), ("wall", wall)):
            if not np.isfinite(a).all():
                raise ValueError(f"face field component {name} contains non-finite values")
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "wall", wall)

    @classmethod
    def zeros(cls, grid: Grid) -> FaceField:
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_faces(cls, grid: Grid, vec: np.ndarray, wall: np.ndarray | None = None) -> FaceField:
        vec = np.asarray(vec, dtype=float)
        return cls(grid, vec[: grid.n_xfaces], vec[grid.n_xfaces: grid.n_faces], wall)

    @classmethod
    def from_ext(cls, grid: Grid, vec: np.ndarray) -> FaceField:
        vec = np.asarray(vec, dtype=float)
        return cls.from_faces(grid, vec[: grid.n_faces], vec[grid.n_faces:])

    @classmethod
    def from_function(cls, grid: Grid, fn) -> FaceField:
        """Sample ``fn(x, y) -> (u, v)`` on faces and wall nodes (tangential part)."""
        xs, ys = grid.xface_centers()
        u = fn(xs, ys)[0]
        xs, ys = grid.yface_centers()
        v = fn(xs, ys)[1]
        bx = np.arange(grid.nx + 1) * grid.hx
        by = np.arange(grid.ny + 1) * grid.hy
        wall = np.concatenate([
            np.broadcast_to(fn(bx, np.zeros_like(bx))[0], bx.shape),
            np.broadcast_to(fn(bx, np.full_like(bx, grid.ly))[0], bx.shape),
            np.broadcast_to(fn(np.zeros_like(by), by)[1], by.shape),
            np.broadcast_to(fn(np.full_like(by, grid.lx), by)[1], by.shape),
        ])
        return cls(grid, np.broadcast_to(u, (grid.nx + 1, grid.ny)), np.broadcast_to(v, (grid.nx, grid.ny + 1)), wall)

    @property
    def faces(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.y.ravel()])

    @property
    def ext(self) -> np.ndarray:
        return np.concatenate([self.faces, self.wall])

    def normal_trace(self) -> np.ndarray:
        """Boundary-normal face values (left, right, bottom, top)."""
        return np.concatenate([self.x[0], self.x[-1], self.y[:, 0], self.y[:, -1]])

    def cell_centered(self) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.x[1:] + self.x[:-1]), 0.5 * (self.y[:, 1:] + self.y[:, :-1])


@dataclass(frozen=True)
class SparseOperator:
    """Sparse matrix with a declared symmetry flag."""

    matrix: sp.spmatrix
    symmetric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def restrict(self, rows: np.ndarray, cols: np.ndarray | None = None) -> SparseOperator:
        cols = rows if cols is None else cols
        sub = self.matrix[rows][:, cols]
        return SparseOperator(sub, self.symmetric and cols is rows)


@dataclass(frozen=True)
class NoSlip:
    pass


@dataclass(frozen=True)
class NavierSlip:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"friction parameter gamma must be positive, got {self.gamma}")


BoundaryKind = NoSlip | NavierSlip


def build_grid(nx: int, ny: int, lx: float, ly: float) -> Grid:
    return Grid(nx, ny, lx, ly)


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise ValueError("grid mismatch between operands")


def grad_cc_to_face(f: Field) -> FaceField:
    g = f.grid
    return FaceField.from_faces(g, g.grad @ f.flat)


def div_face_to_cc(w: FaceField) -> Field:
    g = w.grid
    return Field(g, g.div @ w.faces)


def laplace_neumann(f: Field) -> Field:
    g = f.grid
    return Field(g, g.laplacian @ f.flat)


def cell_mean(f: Field) -> float:
    g = f.grid
    return float(f.flat.sum() * g.cell_area / g.area)


def project_mean_free(f: Field) -> Field:
    return Field(f.grid, f.values - cell_mean(f))


def inner_cells(f: Field, g: Field) -> float:
    _check_grid(f.grid, g.grid)
    return float(np.dot(f.flat, g.flat) * f.grid.cell_area)


def inner_faces(a: FaceField, b: FaceField) -> float:
    _check_grid(a.grid, b.grid)
    return float(np.dot(a.faces * a.grid.face_weights, b.faces))


def assemble_viscous_form(nu: Field, eta: Field, bc: BoundaryKind) -> SparseOperator:
    """Bilinear form of ``S(Dv) : grad(psi)`` on extended velocity vectors.

    ``S = 2 nu Dv + eta div(v) I``; normal strains are integrated at cell
    centres, shear at the nodes with ``nu`` averaged from the adjacent cells.
    For :class:`NavierSlip` the wall friction ``gamma |v_tau|^2`` is added with
    trapezoid weights along the boundary.
    """
    g = nu.grid
    _check_grid(g, eta.grid)
    if np.any(nu.values <= 0) or np.any(eta.values <= 0):
        raise ValueError("viscosities nu and eta must be strictly positive")
    exx, eyy, shear = g.strain_ops
    wc = g.cell_area
    two_nu = sp.diags(2.0 * nu.flat * wc)
    eta_w = sp.diags(eta.flat * wc)
    divv = exx + eyy
    nu_node = g.node_avg @ nu.flat
    a = exx.T @ two_nu @ exx + eyy.T @ two_nu @ eyy + divv.T @ eta_w @ divv
    a = a + shear.T @ sp.diags(nu_node * g.node_weights) @ shear
    if isinstance(bc, NavierSlip):
        fr = np.zeros(g.n_ext)
        fr[g.n_faces:] = bc.gamma * g.wall_weights
        a = a + sp.diags(fr)
    elif not isinstance(bc, NoSlip):
        raise TypeError(f"unsupported boundary kind {bc!r}")
    a = sp.csr_matrix(a)
    # exact symmetry despite the rounding order of the products above
    a = 0.5 * (a + a.T)
    return SparseOperator(a, symmetric=True)


def velocity_dofs(grid: Grid, bc: BoundaryKind) -> np.ndarray:
    """Extended-layout indices of the free velocity unknowns for ``bc``."""
    if isinstance(bc, NavierSlip):
        return grid.slip_dofs
    return grid.interior_faces
