"""Tests for dataset collapsing and quasi-minimum power-divergence fitting."""

from fractions import Fraction

import numpy as np
import pytest

from clustergof.datasets import housing_dataset
from clustergof.divergence import divergence
from clustergof.estimation import (
    ClusterDataset,
    ClusterTable,
    FitError,
    FitOptions,
    collapse,
    group_collapse,
    independence_mle,
    qmpe,
)
from clustergof.model import LogLinearModel, build_probabilities, independence_design

LAMBDA_GRID = (-0.5, 0.0, 2 / 3, 1.0, 2.0)


def random_count_dataset(rng, groups=((5, 18), (3, 2)), m=9, concentration=2.0):
    """Clustered multinomial counts with a random cell distribution."""
    p = rng.dirichlet(np.full(m, concentration))
    mats, sizes = [], []
    for n_g, count in groups:
        mats.append(rng.multinomial(n_g, p, size=count))
        sizes.append(n_g)
    return ClusterDataset(counts=tuple(mats), sizes=tuple(sizes))


class TestClusterDataset:
    def test_housing_shape(self):
        ds = housing_dataset()
        assert ds.n_groups == 2
        assert ds.sizes == (5, 3)
        assert ds.group_counts == (18, 2)
        assert ds.n_clusters == 20
        assert ds.total_individuals == 96

    def test_row_sum_mismatch_rejected(self):
        with pytest.raises(ValueError, match="row sum"):
            ClusterDataset(counts=(np.array([[2, 1], [1, 1]]),), sizes=(3,))

    def test_duplicate_sizes_rejected(self):
        mats = (np.array([[1, 1]]), np.array([[2, 0]]))
        with pytest.raises(ValueError, match="distinct"):
            ClusterDataset(counts=mats, sizes=(2, 2))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ClusterDataset(counts=(np.array([[-1, 3]]),), sizes=(2,))

    def test_from_tables_orders_by_label(self):
        tables = [
            ClusterTable(group=2, cluster=1, counts=np.array([1, 2])),
            ClusterTable(group=1, cluster=2, counts=np.array([0, 2])),
            ClusterTable(group=1, cluster=1, counts=np.array([2, 0])),
        ]
        ds = ClusterDataset.from_tables(tables)
        assert ds.sizes == (2, 3)
        np.testing.assert_array_equal(ds.counts[0], [[2, 0], [0, 2]])
        np.testing.assert_array_equal(ds.counts[1], [[1, 2]])


class TestCollapse:
    def test_housing_totals(self):
        ds = housing_dataset()
        p_hat = collapse(ds)
        assert ds.total_individuals == 5 * 18 + 3 * 2 == 96
        assert p_hat[2] == 0.0  # cell (1,3) is empty in every cluster
        np.testing.assert_allclose(p_hat.sum(), 1.0, atol=1e-15)
        np.testing.assert_array_equal(ds.total_counts(), [18, 6, 0, 28, 28, 3, 4, 5, 4])

    def test_single_cluster(self):
        ds = ClusterDataset(counts=(np.array([[2, 3]]),), sizes=(5,))
        np.testing.assert_allclose(collapse(ds), [0.4, 0.6])

    def test_identical_relative_frequencies(self):
        """Groups sharing one relative-frequency vector collapse to it."""
        ds = ClusterDataset(
            counts=(np.array([[2, 2], [2, 2]]), np.array([[3, 3]])),
            sizes=(4, 6),
        )
        np.testing.assert_allclose(collapse(ds), [0.5, 0.5], atol=1e-15)


class TestGroupCollapse:
    def test_single_table(self):
        ds = ClusterDataset(counts=(np.array([[1, 1, 0]]),), sizes=(2,))
        np.testing.assert_allclose(group_collapse(ds, 0), [0.5, 0.5, 0.0])

    def test_housing_second_group(self):
        ds = housing_dataset()
        p2 = group_collapse(ds, 1)
        assert p2[3] == pytest.approx(2 / 6)  # cell (2,1): counts 1 + 1 over 3*2

    def test_weighted_identity_in_rationals(self):
        """collapse == sum_g w_g group_collapse, exactly, on integer counts."""
        ds = housing_dataset()
        total = Fraction(ds.total_individuals)
        m = ds.n_cells
        combined = [Fraction(0)] * m
        for g, mat in enumerate(ds.counts):
            n_g, count = ds.sizes[g], mat.shape[0]
            w = Fraction(n_g * count, ds.total_individuals)
            for r in range(m):
                p_gr = Fraction(int(mat[:, r].sum()), n_g * count)
                combined[r] += w * p_gr
        expected = [Fraction(int(y), int(total)) for y in ds.total_counts()]
        assert combined == expected

    def test_weighted_identity_floating(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            ds = random_count_dataset(rng)
            w = np.array([n * mat.shape[0] for n, mat in zip(ds.sizes, ds.counts)],
                         dtype=float)
            w /= w.sum()
            stacked = sum(w_g * group_collapse(ds, g) for g, w_g in enumerate(w))
            np.testing.assert_allclose(stacked, collapse(ds), atol=1e-12)


class TestIndependenceMle:
    def test_uniform_fixed_point(self):
        p = np.full(9, 1 / 9)
        np.testing.assert_allclose(independence_mle(p, 3, 3), p, atol=1e-15)

    def test_diagonal_two_by_two(self):
        got = independence_mle([0.5, 0.0, 0.0, 0.5], 2, 2)
        np.testing.assert_allclose(got, [0.25, 0.25, 0.25, 0.25], atol=1e-15)

    def test_rank_one_fixed_point(self):
        r = np.array([0.2, 0.3, 0.5])
        c = np.array([0.6, 0.4])
        p = np.outer(r, c).ravel()
        np.testing.assert_allclose(independence_mle(p, 3, 2), p, atol=1e-15)


class TestQmpe:
    def test_mle_matches_margins_product(self):
        """At lam2 = 0 on the independence design the fit is the margins product."""
        model = independence_design(3, 3)
        ds = housing_dataset()
        p_hat = collapse(ds)
        fit = qmpe(p_hat, model, 0.0)
        np.testing.assert_allclose(fit.fitted, independence_mle(p_hat, 3, 3), atol=1e-8)

        rng = np.random.default_rng(77)
        for _ in range(20):
            q = rng.dirichlet(np.full(9, 1.5))
            fit = qmpe(q, model, 0.0)
            np.testing.assert_allclose(fit.fitted, independence_mle(q, 3, 3), atol=1e-8)

    @pytest.mark.parametrize("lam2", LAMBDA_GRID + (-1.0,))
    def test_model_point_is_fixed_point(self, lam2):
        """A p_hat already on the model surface is fitted exactly, any order."""
        model = independence_design(3, 3)
        p_hat = build_probabilities(model, np.array([0.1, 0.2, 0.4, 0.3]))
        fit = qmpe(p_hat, model, lam2)
        assert fit.divergence_at_min <= 1e-12
        np.testing.assert_allclose(fit.fitted, p_hat, atol=1e-8)
        assert fit.gradient_norm <= 1e-10

    @pytest.mark.parametrize("lam2", LAMBDA_GRID)
    def test_local_minimum(self, lam2):
        """No direction of length 1e-3 improves the objective at the fit."""
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        fit = qmpe(p_hat, model, lam2)
        at_min = divergence(lam2, p_hat, fit.fitted)
        rng = np.random.default_rng(31)
        for _ in range(100):
            delta = rng.normal(size=4)
            delta *= 1e-3 / np.linalg.norm(delta)
            perturbed = build_probabilities(model, fit.theta + delta)
            assert divergence(lam2, p_hat, perturbed) >= at_min - 1e-14

    @pytest.mark.parametrize("lam2", LAMBDA_GRID)
    def test_fitted_probabilities_invariant_to_reparameterization(self, lam2):
        """Replacing W by W B (B invertible) moves theta but not p(theta)."""
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        base = qmpe(p_hat, model, lam2)
        rng = np.random.default_rng(8)
        for _ in range(3):
            b = rng.normal(size=(4, 4))
            while abs(np.linalg.det(b)) < 0.1:
                b = rng.normal(size=(4, 4))
            refit = qmpe(p_hat, LogLinearModel(model.design @ b), lam2)
            np.testing.assert_allclose(refit.fitted, base.fitted, atol=1e-8)

    def test_zero_cells_feasible_above_minus_one(self):
        # the housing p_hat has an empty cell; every grid order must cope
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        for lam2 in LAMBDA_GRID:
            fit = qmpe(p_hat, model, lam2)
            assert fit.gradient_norm <= 1e-10

    def test_reciprocal_order_rejects_zero_cells(self):
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        with pytest.raises(ValueError, match="infeasible"):
            qmpe(p_hat, model, -1.0)
        with pytest.raises(ValueError, match="infeasible"):
            qmpe(p_hat, model, -1.5)

    def test_nonconvergence_raises_with_diagnostics(self):
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        with pytest.raises(FitError) as info:
            qmpe(p_hat, model, 0.0, FitOptions(max_iter=1, grad_tol=1e-14, step_tol=0.0))
        assert info.value.iterations <= 1
        assert np.all(np.isfinite(info.value.theta))
        assert info.value.gradient_norm > 0

    def test_uniqueness_check_smoke(self):
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        fit = qmpe(p_hat, model, 0.0, FitOptions(check_unique=True))
        assert fit.unique is True

    def test_deterministic(self):
        model = independence_design(3, 3)
        p_hat = collapse(housing_dataset())
        a = qmpe(p_hat, model, 2 / 3)
        b = qmpe(p_hat, model, 2 / 3)
        np.testing.assert_array_equal(a.theta, b.theta)
