import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chflow.potential import (BarrierViolation, ConvexSplit, PotentialParams, clamp_barrier, f0, f0_prime,
                              f0_second, f_log, f_log_prime, kappa_min)

P = PotentialParams(1.0, 2.0)
K = ConvexSplit.minimal(P)
interior = st.floats(-0.999, 0.999)


def f_ref(s, theta, theta_c):
    """Formula evaluated with math scalars, 0 ln 0 = 0."""
    def xlx(t):
        return 0.0 if t == 0 else t * math.log(t)
    return theta / 2 * (xlx(1 + s) + xlx(1 - s)) + theta_c / 2 * (1 - s * s)


class TestParams:
    @pytest.mark.parametrize("theta,theta_c", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
    def test_rejects_nonpositive(self, theta, theta_c):
        with pytest.raises(ValueError):
            PotentialParams(theta, theta_c)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -1e-3])
    def test_rejects_bad_eps(self, eps):
        with pytest.raises(ValueError):
            PotentialParams(1.0, 2.0, eps)

    def test_admissibility(self):
        assert PotentialParams(1.0, 2.0).admissibility_issues() == []
        assert PotentialParams(2.0, 1.0).admissibility_issues()
        assert PotentialParams(1.0, 1.0).admissibility_issues()

    def test_negative_kappa_rejected(self):
        with pytest.raises(ValueError):
            ConvexSplit(-0.1)


class TestFLog:
    def test_origin(self):
        assert f_log(0.0, P) == 1.0

    @pytest.mark.parametrize("s", [-1.0, 1.0])
    def test_pure_phases(self, s):
        assert math.isclose(f_log(s, P), math.log(2), rel_tol=1e-15)

    @given(st.floats(-1, 1), st.floats(0.1, 3), st.floats(0.1, 3))
    def test_matches_scalar_reference(self, s, theta, theta_c):
        assert math.isclose(f_log(s, PotentialParams(theta, theta_c)), f_ref(s, theta, theta_c),
                            rel_tol=1e-13, abs_tol=1e-13)

    def test_symmetry(self, rng):
        s = rng.uniform(-1, 1, 100)
        assert np.array_equal(f_log(s, P), f_log(-s, P))

    def test_rejects_outside(self):
        with pytest.raises(ValueError):
            f_log(1.0 + 1e-12, P)

    def test_prime_is_derivative(self, rng):
        s = rng.uniform(-0.95, 0.95, 50)
        d = 1e-6
        fd = (f_log(s + d, P) - f_log(s - d, P)) / (2 * d)
        assert np.allclose(f_log_prime(s, P), fd, rtol=1e-7, atol=1e-8)


class TestKappaMin:
    def test_reference(self):
        assert kappa_min(PotentialParams(1.0, 2.0)) == 1.0

    def test_convex_already(self):
        assert kappa_min(PotentialParams(2.0, 1.0)) == 0.0

    def test_equal(self):
        assert kappa_min(PotentialParams(1.5, 1.5)) == 0.0

    @given(st.floats(0.05, 3), st.floats(0.05, 3))
    def test_against_sampled_minimum(self, theta, theta_c):
        s = np.linspace(-0.999, 0.999, 4001)
        second = theta / (1 - s * s) - theta_c
        assert math.isclose(kappa_min(PotentialParams(theta, theta_c)), max(-second.min(), 0.0),
                            rel_tol=1e-9, abs_tol=1e-12)


class TestConvexPart:
    def test_odd_at_origin(self):
        assert f0_prime(0.0, P, K) == 0.0

    def test_central_difference(self, rng):
        s = rng.uniform(-0.9, 0.9, 50)
        d = 1e-5
        fd = (f0(s + d, P, K) - f0(s - d, P, K)) / (2 * d)
        exact = f0_prime(s, P, K)
        assert np.all(np.abs(fd - exact) <= 1e-6 * (1 + np.abs(exact)))

    def test_monotone(self, rng):
        s = np.sort(rng.uniform(-0.999, 0.999, 1000))
        s = np.unique(s)
        assert np.all(np.diff(f0_prime(s, P, K)) > 0)

    def test_second_at_origin(self):
        assert f0_second(0.0, P, K) == 0.0

    def test_second_near_barrier(self):
        s = 0.99
        assert math.isclose(f0_second(s, P, K), 1 / (1 - s * s) - 2 + 1, rel_tol=1e-12)
        assert f0_second(s, P, K) > 49

    def test_second_nonnegative(self):
        eps = 1e-6
        s = np.linspace(-1 + eps, 1 - eps, 1000)
        assert np.all(f0_second(s, P, K) >= 0)

    @given(interior)
    def test_second_is_derivative_of_first(self, s):
        s = float(np.clip(s, -0.99, 0.99))
        d = 1e-6
        fd = (f0_prime(s + d, P, K) - f0_prime(s - d, P, K)) / (2 * d)
        assert math.isclose(fd, f0_second(s, P, K), rel_tol=1e-5, abs_tol=1e-5)

    @pytest.mark.parametrize("fn", [f0_prime, f0_second])
    def test_barrier_violation(self, fn):
        with pytest.raises(BarrierViolation):
            fn(np.array([0.0, 1.0]), P, K)
        with pytest.raises(BarrierViolation):
            fn(-1 + 1e-12, P, K)
        with pytest.raises(BarrierViolation):
            fn(np.nan, P, K)


class TestClamp:
    def test_examples(self):
        assert clamp_barrier(0.5, 1e-6) == 0.5
        assert clamp_barrier(1.2, 1e-6) == 1 - 1e-6
        assert clamp_barrier(-3.0, 0.01) == -0.99

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            clamp_barrier(0.0, 0.0)

    @given(st.floats(-10, 10), st.floats(1e-12, 0.5))
    def test_inside(self, s, eps):
        c = clamp_barrier(s, eps)
        assert -1 + eps <= c <= 1 - eps
