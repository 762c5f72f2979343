import math

import numpy as np
import pytest

from chflow import diagnostics as dg
from chflow.grid import FaceField, Field, Grid
from chflow.linsolve import NewtonConfig
from chflow.model_qstokes import (QSSystem, StateQS, assemble_jacobian_qstokes, initial_state_qs, mean_omega,
                                  potential_residual, reconstruct_full_pressure, residual_qstokes, step_qstokes)
from chflow.params import Coefficient, ModelParams
from chflow.potential import PotentialParams

from conftest import interface_field
from oracles import dense_newton, directional_fd_error


def make_state(g, kind="stratified"):
    return initial_state_qs(Field(g, interface_field(g, kind)))


class TestSystem:
    def test_jacobian_matches_finite_differences(self, varied_params, rng):
        g = Grid(8, 8)
        prev = make_state(g)
        sys = QSSystem(prev, varied_params, 1e-2)
        for _ in range(20):
            x = sys.pack(prev) + 0.05 * rng.normal(size=sys.size)
            assert directional_fd_error(sys.residual, sys.jacobian, x, rng.normal(size=sys.size)) <= 1e-5

    def test_wrappers(self, base_params):
        g = Grid(4, 4)
        prev = make_state(g)
        r = residual_qstokes(prev, prev, base_params, 1e-2)
        assert assemble_jacobian_qstokes(prev, prev, base_params, 1e-2).shape == (r.size, r.size)

    @pytest.mark.parametrize("kw", [dict(gamma=0.0), dict(transition_mobility=Coefficient(0.0))])
    def test_rejects_unsupported_params(self, kw):
        p = ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0), **kw)
        with pytest.raises(ValueError):
            QSSystem(make_state(Grid(4, 4)), p, 1e-2)

    def test_rejects_matched_density(self):
        p = ModelParams(1.0, 1.0, PotentialParams(1.0, 2.0), matched_density=True)
        with pytest.raises(ValueError, match="densities"):
            QSSystem(make_state(Grid(4, 4)), p, 1e-2)

    def test_state_validation(self):
        g = Grid(3, 3)
        z = Field.constant(g, 0.0)
        with pytest.raises(ValueError, match="mean free"):
            StateQS(FaceField.zeros(g), Field.constant(g, 1.0), z, z)
        with pytest.raises(ValueError):
            StateQS(FaceField.zeros(g), z, z, Field.constant(g, -1.0))

    def test_mass_cell_sum_identity(self, varied_params, rng):
        p, h = varied_params, 0.05
        g = Grid(6, 5)
        prev = make_state(g)
        sys = QSSystem(prev, p, h)
        x = sys.pack(prev) + 0.05 * rng.normal(size=sys.size)
        rb = sys.residual(x)[sys.slam]
        rho, rho_k = p.rho(x[sys.sphi]), p.rho(prev.phi.flat)
        lhs = rb.sum() * g.cell_area
        rhs = (rho.mean() - rho_k.mean()) * g.area / h + h * x[sys.slam].sum() * g.cell_area
        assert math.isclose(lhs, rhs, rel_tol=1e-10, abs_tol=1e-12)


class TestFixedPoint:
    @pytest.mark.parametrize("m", [-0.5, 0.0, 0.25])
    def test_uniform_invariant(self, base_params, m):
        g = Grid(6, 6)
        s0 = initial_state_qs(Field.constant(g, m))
        assert np.abs(residual_qstokes(s0, s0, base_params, 1e-2, c=0.0)[: -1 - g.n_cells]).max() <= 1e-12
        s1, rec = step_qstokes(s0, base_params, 1e-2)
        assert np.abs(s1.phi.values - m).max() <= 1e-12
        assert np.abs(s1.u.ext).max() <= 1e-12
        assert np.abs(s1.omega.values).max() <= 1e-12
        assert np.abs(s1.lambda0.values).max() <= 1e-12
        assert rec.D <= 1e-20


class TestStep:
    def test_energy_mean_pressure_mean(self, varied_params):
        p = varied_params
        g = Grid(10, 10)
        s = make_state(g)
        mean0 = s.phi.values.mean()
        for k in range(5):
            s, rec = step_qstokes(s, p, 5e-3, step=k + 1)
            assert rec.extras["passed"]
            assert abs(rec.mean_phi - mean0) <= 1e-10
            assert abs(s.lambda0.values.mean()) <= 1e-12
            assert all(v >= 0 for v in rec.extras["dissipation"].values())
            assert rec.E_kin == 0 and rec.E_tot == rec.E_free

    def test_dissipation_two_paths(self, varied_params, rng):
        p, h = varied_params, 0.02
        g = Grid(7, 8)
        prev = make_state(g)
        sys = QSSystem(prev, p, h)
        x = sys.pack(prev) + 0.1 * rng.normal(size=sys.size)
        x[sys.slam] -= x[sys.slam].mean()
        state = sys.unpack(x)
        assert math.isclose(dg.dissipation_qstokes(state, prev.phi, p, h).total, sys.dissipation(x), rel_tol=1e-12)

    def test_dense_oracle_4x4(self, varied_params):
        p = varied_params
        g = Grid(4, 4)
        prev = make_state(g, "bubble")
        new, rec = step_qstokes(prev, p, 1e-2, NewtonConfig(res_tol=1e-12))
        sys = QSSystem(prev, p, 1e-2)
        ref = dense_newton(sys.residual, sys.pack(prev))
        assert np.abs(sys.pack(new, rec.extras["c"]) - ref).max() <= 1e-8

    def test_large_friction_approaches_no_slip(self):
        p = ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0), gamma=1e6)
        g = Grid(12, 12)
        s, _ = step_qstokes(make_state(g, "bubble"), p, 1e-3)
        interior = np.abs(s.u.faces).max()
        assert interior > 0
        assert np.abs(s.u.wall).max() <= 1e-3 * interior

    def test_small_friction_slips(self):
        p = ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0), gamma=1e-2)
        g = Grid(12, 12)
        s, _ = step_qstokes(make_state(g, "bubble"), p, 1e-3)
        assert np.abs(s.u.wall).max() > 1e-3 * np.abs(s.u.faces).max()


class TestPressure:
    def test_mean_omega_constant_mobility(self, base_params, rng):
        g = Grid(5, 5)
        om = Field(g, rng.normal(size=g.shape))
        assert abs(mean_omega(om, Field(g, rng.uniform(-0.9, 0.9, g.shape)), base_params)) <= 1e-15
        assert mean_omega(Field.constant(g, 3.0), Field.constant(g, 0.1), base_params) == 0.0

    def test_mean_omega_quadrature(self, rng):
        p = ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0), transition_mobility=Coefficient(1.0, 0.0, 0.5))
        g = Grid(9, 7)
        phik = rng.uniform(-0.9, 0.9, g.shape)
        w = rng.normal(size=g.shape)
        w0 = w - w.mean()
        mr = 1 + phik**2 / 2
        # the weighted mean of the solution, written with plain loops
        num = den = 0.0
        for a, b in zip(mr.ravel(), w0.ravel()):
            num += a * b * g.cell_area
            den += a * g.cell_area
        got = mean_omega(Field(g, w0), Field(g, phik), p)
        assert abs(got - (-num / den)) <= 1e-13

    def test_mean_omega_matches_converged_solution(self, varied_params):
        g = Grid(8, 8)
        prev = make_state(g)
        s, _ = step_qstokes(prev, varied_params, 1e-2)
        assert abs(mean_omega(s.omega, prev.phi, varied_params) - s.omega.values.mean()) <= 1e-10

    def test_reconstruction_satisfies_full_equation(self, varied_params):
        p = varied_params
        g = Grid(8, 8)
        s = make_state(g)
        for k in range(3):
            prev = s
            s, rec = step_qstokes(prev, p, 1e-2, step=k + 1)
            lam = reconstruct_full_pressure(s.lambda0, s.omega, s.phi, prev.phi, p)
            assert np.abs(potential_residual(lam, s.omega, s.phi, prev.phi, p)).max() <= 1e-9
            assert math.isclose(lam.values.mean(), -rec.extras["c"] / p.alpha, rel_tol=1e-8, abs_tol=1e-10)

    def test_symmetric_case_zero_mean_pressure(self):
        p = ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0))
        g = Grid(6, 6)
        x, y = g.cell_centers()
        phi = Field(g, 0.5 * np.tanh((x - 0.5) / 0.2))
        z = Field.constant(g, 0.0)
        lam = reconstruct_full_pressure(z, z, phi, phi, p)
        assert np.abs(lam.values).max() <= 1e-15

    def test_matched_density_reconstruction_error(self):
        p = ModelParams(1.0, 1.0, PotentialParams(1.0, 2.0), matched_density=True)
        g = Grid(3, 3)
        z = Field.constant(g, 0.0)
        with pytest.raises(ValueError, match="alpha"):
            reconstruct_full_pressure(z, z, z, z, p)
