"""Tests for log-linear model construction and probability mapping."""

import numpy as np
import pytest

from clustergof.model import (
    LogLinearModel,
    build_probabilities,
    cell_index,
    independence_design,
    load_design_csv,
    sigma_matrix,
    validate_design,
)

# Effects-coded design for two 3-level variables, cells lexicographic.
DESIGN_3X3 = np.array([
    [1, 0, 1, 0],
    [1, 0, 0, 1],
    [1, 0, -1, -1],
    [0, 1, 1, 0],
    [0, 1, 0, 1],
    [0, 1, -1, -1],
    [-1, -1, 1, 0],
    [-1, -1, 0, 1],
    [-1, -1, -1, -1],
], dtype=float)


def random_simplex(rng, m):
    x = rng.dirichlet(np.ones(m))
    return x / x.sum()


class TestBuildProbabilities:
    def test_zero_theta_is_uniform(self):
        model = independence_design(3, 3)
        p = build_probabilities(model, np.zeros(4))
        np.testing.assert_allclose(p, np.full(9, 1 / 9), rtol=0, atol=1e-15)

    def test_matches_direct_evaluation(self):
        """Exponentiate-and-normalize oracle, per-cell with explicit effects."""
        theta = np.array([0.1, 0.2, 0.4, 0.3])
        row_eff = [0.1, 0.2, -(0.1 + 0.2)]
        col_eff = [0.4, 0.3, -(0.4 + 0.3)]
        expected = np.array([
            np.exp(row_eff[i] + col_eff[j]) for i in range(3) for j in range(3)
        ])
        expected /= expected.sum()
        p = build_probabilities(independence_design(3, 3), theta)
        np.testing.assert_allclose(p, expected, rtol=1e-14)

    def test_invariant_under_ones_shift(self):
        """Adding 1_M c^T to the design cancels in the normalization."""
        rng = np.random.default_rng(5)
        model = independence_design(3, 3)
        theta = rng.normal(size=4)
        p = build_probabilities(model, theta)
        for _ in range(20):
            c = rng.normal(size=4)
            shifted = LogLinearModel(model.design + np.outer(np.ones(9), c))
            np.testing.assert_allclose(
                build_probabilities(shifted, theta), p, rtol=0, atol=1e-12)

    def test_overflow_guarded(self):
        model = independence_design(2, 2)
        p = build_probabilities(model, np.array([800.0, -800.0]))
        assert np.all(np.isfinite(p))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_positive_and_normalized(self):
        rng = np.random.default_rng(11)
        model = independence_design(3, 3)
        for _ in range(50):
            p = build_probabilities(model, rng.normal(scale=2, size=4))
            assert np.all(p > 0)
            assert abs(p.sum() - 1) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_probabilities(independence_design(3, 3), np.zeros(3))

    def test_independence_factorizes(self):
        """On the two-way design, fitted cells are products of their margins."""
        rng = np.random.default_rng(3)
        model = independence_design(3, 3)
        for _ in range(25):
            p = build_probabilities(model, rng.normal(size=4)).reshape(3, 3)
            outer = np.outer(p.sum(axis=1), p.sum(axis=0))
            np.testing.assert_allclose(p, outer, rtol=1e-12)


class TestSigmaMatrix:
    def test_hand_value_two_cells(self):
        np.testing.assert_allclose(
            sigma_matrix([0.5, 0.5]),
            [[0.25, -0.25], [-0.25, 0.25]], rtol=0, atol=1e-15)

    def test_mass_point_degenerate(self):
        s = sigma_matrix([1.0, 0.0, 0.0])
        np.testing.assert_allclose(s[0], 0.0, atol=1e-15)
        np.testing.assert_allclose(s[:, 0], 0.0, atol=1e-15)

    def test_annihilates_ones_and_psd(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            m = rng.integers(2, 8)
            p = random_simplex(rng, m)
            s = sigma_matrix(p)
            np.testing.assert_allclose(s @ np.ones(m), 0.0, atol=1e-14)
            np.testing.assert_allclose(s, s.T, atol=1e-15)
            assert np.linalg.eigvalsh(s).min() >= -1e-12


class TestIndependenceDesign:
    def test_3x3_matches_reference_matrix(self):
        model = independence_design(3, 3)
        np.testing.assert_array_equal(model.design, DESIGN_3X3)
        assert model.n_cells == 9
        assert model.n_params == 4
        assert model.df == 4

    def test_2x2(self):
        expected = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        np.testing.assert_array_equal(independence_design(2, 2).design, expected)

    def test_construction_validates(self):
        assert validate_design(independence_design(3, 3)).ok
        assert validate_design(independence_design(4, 2)).ok

    def test_rejects_single_level(self):
        with pytest.raises(ValueError):
            independence_design(1, 3)


class TestValidateDesign:
    def test_ones_column_fails(self):
        w = DESIGN_3X3.copy()
        w[:, 0] = 1.0
        report = validate_design(LogLinearModel(w))
        assert not report.ok
        assert not report.ones_independent

    def test_duplicate_column_fails(self):
        w = DESIGN_3X3.copy()
        w[:, 1] = w[:, 0]
        report = validate_design(LogLinearModel(w))
        assert not report.ok
        assert not report.full_rank
        assert report.rank == 3

    def test_param_dim_bound(self):
        # M0 = M - 1 saturates the probability simplex; flagged
        w = np.eye(4)[:, :3]
        report = validate_design(LogLinearModel(w))
        assert not report.param_dim_ok


class TestCellIndex:
    def test_lexicographic(self):
        assert cell_index(1, 1, 3) == 0
        assert cell_index(1, 3, 3) == 2
        assert cell_index(2, 1, 3) == 3
        assert cell_index(3, 3, 3) == 8

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            cell_index(1, 4, 3)


class TestDesignCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "design.csv"
        np.savetxt(path, DESIGN_3X3, delimiter=",")
        model = load_design_csv(path)
        np.testing.assert_allclose(model.design, DESIGN_3X3)

    def test_bad_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\nx,4\n")
        with pytest.raises(ValueError):
            load_design_csv(path)
