import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from chflow.grid import (FaceField, Field, Grid, NavierSlip, NoSlip, SparseOperator, assemble_viscous_form,
                         build_grid, cell_mean, div_face_to_cc, grad_cc_to_face, inner_cells, inner_faces,
                         laplace_neumann, project_mean_free, velocity_dofs)

grids = st.builds(Grid, st.integers(2, 9), st.integers(2, 9), st.floats(0.3, 3.0), st.floats(0.3, 3.0))


def zero_normal(grid, rng):
    v = np.zeros(grid.n_faces)
    v[grid.interior_faces] = rng.normal(size=grid.interior_faces.size)
    return FaceField.from_faces(grid, v)


class TestBuildGrid:
    def test_spacing(self):
        g = build_grid(4, 4, 1.0, 1.0)
        assert g.hx == g.hy == 0.25

    def test_anisotropic(self):
        g = build_grid(2, 3, 1.0, 1.5)
        assert (g.hx, g.hy) == (0.5, 0.5)

    @pytest.mark.parametrize("args", [(1, 4, 1.0, 1.0), (4, 1, 1.0, 1.0), (4, 4, 0.0, 1.0), (4, 4, 1.0, -2.0)])
    def test_rejects_degenerate(self, args):
        with pytest.raises(ValueError):
            build_grid(*args)

    def test_layout_sizes(self):
        g = Grid(5, 3)
        assert g.n_faces == 6 * 3 + 5 * 4
        assert g.n_wall == 2 * 6 + 2 * 4
        assert g.interior_faces.size == 4 * 3 + 5 * 2
        assert g.slip_dofs.size == g.interior_faces.size + 2 * 4 + 2 * 2
        assert len(set(g.slip_dofs)) == g.slip_dofs.size

    def test_quadrature_weights_sum_to_measures(self):
        g = Grid(6, 4, 2.0, 1.5)
        assert math.isclose(g.face_weights[: g.n_xfaces].sum(), g.area)
        assert math.isclose(g.face_weights[g.n_xfaces:].sum(), g.area)
        assert math.isclose(g.node_weights.sum(), g.area)
        assert math.isclose(g.wall_weights.sum(), 2 * (g.lx + g.ly))


class TestFields:
    def test_field_shape_and_readonly(self):
        g = Grid(3, 4)
        f = Field(g, np.arange(12.0))
        assert f.values.shape == (3, 4)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_field_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Field(Grid(2, 2), [0, 1, np.nan, 0])

    def test_facefield_rejects_nonfinite(self):
        g = Grid(2, 2)
        x = np.zeros((3, 2))
        x[1, 1] = np.inf
        with pytest.raises(ValueError):
            FaceField(g, x, np.zeros((2, 3)))

    def test_ext_roundtrip(self, rng):
        g = Grid(4, 3)
        vec = rng.normal(size=g.n_ext)
        assert np.array_equal(FaceField.from_ext(g, vec).ext, vec)


class TestGradDiv:
    def test_constant_has_zero_gradient(self):
        g = Grid(5, 4)
        assert np.all(grad_cc_to_face(Field.constant(g, 3.7)).faces == 0)

    def test_linear_field_gradient(self):
        g = Grid(4, 4)
        w = grad_cc_to_face(Field.from_function(g, lambda x, y: x))
        assert np.allclose(w.x[1:-1], 1.0, rtol=0, atol=1e-14)
        assert np.all(w.normal_trace() == 0)
        assert np.all(w.y == 0)

    @given(grids, st.integers(0, 2**32 - 1))
    def test_adjointness(self, g, seed):
        rng = np.random.default_rng(seed)
        f = Field(g, rng.normal(size=g.shape))
        w = zero_normal(g, rng)
        lhs = inner_faces(grad_cc_to_face(f), w)
        rhs = -inner_cells(f, div_face_to_cc(w))
        assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))

    @pytest.mark.parametrize("n", [2, 5, 8, 16])
    def test_matrix_transpose_relation(self, n):
        g = Grid(n, n + 1, 1.3, 0.7)
        f = g.interior_faces
        assert abs(g.div[:, f] + g.grad[f].T).max() <= 1e-13

    def test_zero_divergence_of_zero(self):
        g = Grid(3, 3)
        assert np.all(div_face_to_cc(FaceField.zeros(g)).values == 0)

    def test_gradient_of_linear_is_divergence_free_inside(self):
        g = Grid(6, 5)
        d = div_face_to_cc(grad_cc_to_face(Field.from_function(g, lambda x, y: 2 * x - 3 * y))).values
        assert np.abs(d[1:-1, 1:-1]).max() <= 1e-11

    @given(grids, st.integers(0, 2**32 - 1))
    def test_divergence_telescopes(self, g, seed):
        w = zero_normal(g, np.random.default_rng(seed))
        total = div_face_to_cc(w).values.sum() * g.cell_area
        assert abs(total) <= 1e-13 * max(1.0, np.abs(w.faces).max())


class TestLaplacian:
    def test_constants_in_kernel(self):
        g = Grid(7, 4)
        assert np.abs(laplace_neumann(Field.constant(g, 2.5)).values).max() <= 1e-12

    def test_symmetric_negative_semidefinite(self, rng):
        g = Grid(9, 7, 1.0, 2.0)
        L = g.laplacian
        assert abs(L - L.T).max() <= 1e-13 * abs(L).max()
        xs = rng.normal(size=(100, g.n_cells))
        assert np.all(np.einsum("ij,ij->i", xs, (L @ xs.T).T) <= 1e-12)

    def test_cosine_eigenfunction(self):
        lx = 2.0
        g = Grid(64, 64, lx, 1.0)
        f = Field.from_function(g, lambda x, y: np.cos(np.pi * x / lx) + 0 * y)
        lap = laplace_neumann(f).values
        exact = -(np.pi / lx) ** 2 * f.values
        assert np.linalg.norm(lap - exact) / np.linalg.norm(exact) <= 2e-3


class TestMeans:
    def test_constant(self):
        assert math.isclose(cell_mean(Field.constant(Grid(3, 5), 0.3)), 0.3)

    def test_antisymmetric(self):
        g = Grid(4, 4)
        vals = np.ones(g.shape)
        vals[:2] = -1
        assert cell_mean(Field(g, vals)) == 0.0

    def test_linear_exact(self):
        g = Grid(10, 10)
        assert abs(cell_mean(Field.from_function(g, lambda x, y: x)) - 0.5) <= 1e-14

    def test_projection(self, rng):
        g = Grid(5, 6)
        f, h = (Field(g, rng.normal(size=g.shape)) for _ in range(2))
        assert np.abs(project_mean_free(Field.constant(g, 4.0)).values).max() == 0
        p = project_mean_free(f)
        assert np.allclose(project_mean_free(p).values, p.values, atol=1e-15)
        assert math.isclose(inner_cells(p, h), inner_cells(f, project_mean_free(h)), rel_tol=1e-12)


class TestViscousForm:
    def test_zero_velocity(self):
        g = Grid(4, 4)
        one = Field.constant(g, 1.0)
        A = assemble_viscous_form(one, one, NavierSlip(1.0))
        assert np.all(A @ FaceField.zeros(g).ext == 0)

    def test_spd_on_noslip_space(self):
        g = Grid(8, 8)
        one = Field.constant(g, 1.0)
        A = assemble_viscous_form(one, one, NoSlip())
        assert A.symmetric
        dofs = velocity_dofs(g, NoSlip())
        sub = A.restrict(dofs).toarray()
        assert np.abs(sub - sub.T).max() == 0
        assert np.linalg.eigvalsh(sub).min() > 0

    def test_spd_on_slip_space(self, rng):
        g = Grid(6, 5)
        nu = Field(g, 1 + rng.uniform(size=g.shape))
        A = assemble_viscous_form(nu, nu, NavierSlip(0.5)).restrict(g.slip_dofs).toarray()
        assert np.linalg.eigvalsh(A).min() > 0

    def test_rejects_nonpositive_viscosity(self):
        g = Grid(3, 3)
        with pytest.raises(ValueError):
            assemble_viscous_form(Field.constant(g, 0.0), Field.constant(g, 1.0), NoSlip())
        with pytest.raises(ValueError):
            NavierSlip(0.0)

    def test_rigid_rotation_only_friction(self):
        # D of a rigid rotation vanishes; only the wall friction survives
        g = Grid(64, 64)
        gamma = 3.0
        one = Field.constant(g, 1.0)
        u = FaceField.from_function(g, lambda x, y: (-(y - 0.5), x - 0.5))
        A = assemble_viscous_form(one, one, NavierSlip(gamma))
        # tangential values on the walls of the unit square: |u_tau| = 1/2 along each side
        exact_friction = gamma * 4 * 0.25
        value = u.ext @ (A @ u.ext)
        assert abs(value - exact_friction) / exact_friction <= 5e-2
        # the discrete strain of a rigid rotation is exactly zero
        nofric = assemble_viscous_form(one, one, NoSlip())
        assert abs(u.ext @ (nofric @ u.ext)) <= 1e-10

    def test_sparse_operator_restrict_and_symmetry(self):
        M = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
        op = SparseOperator(M, symmetric=True)
        assert op.restrict(np.array([1])).toarray().tolist() == [[3.0]]
        assert op.shape == (2, 2)
