"""Tests for the power-divergence family and its zero-cell conventions."""

import math

import numpy as np
import pytest

from clustergof.divergence import divergence, phi_lambda

LAMBDAS = (-1.0, -0.5, 0.0, 2 / 3, 1.0, 2.0)


def random_simplex(rng, m):
    x = rng.dirichlet(np.ones(m))
    return x / x.sum()


class TestPhiLambda:
    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_zero_at_one(self, lam):
        assert phi_lambda(lam, 1.0) == 0.0

    def test_quadratic_case(self):
        """At lam = 1 the generator reduces to (x - 1)^2 / 2."""
        assert phi_lambda(1.0, 3.0) == pytest.approx(2.0, rel=1e-14)
        x = np.linspace(0, 5, 101)
        np.testing.assert_allclose(phi_lambda(1.0, x), (x - 1) ** 2 / 2, rtol=1e-12, atol=1e-15)

    def test_zero_log_zero_convention(self):
        assert phi_lambda(0.0, 0.0) == pytest.approx(1.0, abs=0)

    def test_reciprocal_limit_at_zero(self):
        assert phi_lambda(-1.0, 0.0) == math.inf

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            phi_lambda(0.5, -0.1)

    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_nonnegative_zero_only_at_one(self, lam):
        x = np.concatenate([np.linspace(0.01, 3, 200), [1.0]])
        vals = phi_lambda(lam, x)
        assert np.all(vals >= 0)
        assert np.all(vals[x != 1.0] > 0)


class TestDivergence:
    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_identity_is_zero(self, lam):
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = random_simplex(rng, 6)
            assert divergence(lam, p, p) == 0.0

    def test_hand_value_quadratic(self):
        """lam = 1 reduces to half the Pearson discrepancy."""
        got = divergence(1.0, [0.5, 0.5], [0.25, 0.75])
        want = 0.5 * (0.0625 / 0.25 + 0.0625 / 0.75)
        assert got == pytest.approx(want, rel=1e-14)
        assert got == pytest.approx(1 / 6, rel=1e-12)

    def test_hand_value_kullback(self):
        assert divergence(0.0, [1.0, 0.0], [0.5, 0.5]) == pytest.approx(
            math.log(2), rel=1e-14)

    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_nonnegativity_and_separation(self, lam):
        rng = np.random.default_rng(202)
        for _ in range(1000):
            m = rng.integers(2, 7)
            q, p = random_simplex(rng, m), random_simplex(rng, m)
            d = divergence(lam, q, p)
            assert d >= 0.0
            if np.max(np.abs(q - p)) > 1e-3:
                assert d > 0.0

    def test_continuity_at_limit_orders(self):
        """The generic branch approaches the Kullback branches as lam -> 0, -1."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            q = random_simplex(rng, 5) + 0.01
            p = random_simplex(rng, 5) + 0.01
            q, p = q / q.sum(), p / p.sum()
            at_zero = divergence(0.0, q, p)
            at_minus_one = divergence(-1.0, q, p)
            for eps in (1e-8, -1e-8):
                assert divergence(eps, q, p) == pytest.approx(at_zero, abs=1e-6)
                assert divergence(-1.0 + eps, q, p) == pytest.approx(at_minus_one, abs=1e-6)

    @pytest.mark.parametrize("lam", LAMBDAS)
    def test_generic_sum_equals_closed_form(self, lam):
        """sum p * phi(q/p) computed from the generator matches divergence()."""
        rng = np.random.default_rng(99)
        for _ in range(100):
            q = random_simplex(rng, 6) + 0.05
            p = random_simplex(rng, 6) + 0.05
            q, p = q / q.sum(), p / p.sum()
            generic = float(np.sum(p * phi_lambda(lam, q / p)))
            assert divergence(lam, q, p) == pytest.approx(generic, abs=1e-12)

    def test_zero_cell_conventions(self):
        q = np.array([0.0, 0.5, 0.5])
        p = np.array([0.2, 0.4, 0.4])
        # empty q cell: infinite for lam <= -1, finite above
        assert divergence(-1.0, q, p) == math.inf
        assert divergence(-1.5, q, p) == math.inf
        assert math.isfinite(divergence(-0.5, q, p))
        assert math.isfinite(divergence(0.0, q, p))
        assert math.isfinite(divergence(2.0, q, p))
        # empty p cell with q mass: infinite for lam >= 0, finite in (-1, 0)
        assert divergence(0.0, p, q) == math.inf
        assert divergence(1.0, p, q) == math.inf
        assert math.isfinite(divergence(-0.5, p, q))

    def test_empty_p_cell_matches_limit_convention(self):
        """For lam in (-1, 0) a q-mass cell with p = 0 contributes -q/lam."""
        lam = -0.5
        q = np.array([0.3, 0.7, 0.0])
        p = np.array([0.0, 0.6, 0.4])
        base = float(np.sum(p[1:] * phi_lambda(lam, q[1:] / p[1:])))
        want = base + (-q[0] / lam)
        assert divergence(lam, q, p) == pytest.approx(want, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            divergence(1.0, [0.5, 0.5], [0.3, 0.3, 0.4])

    def test_invalid_probability_vector(self):
        with pytest.raises(ValueError):
            divergence(1.0, [0.5, 0.6], [0.5, 0.5])
