"""
Tests for LASSO coordinate descent and support-capped penalty selection.
"""

import numpy as np
import pytest

from sparse_mfm.domain.errors import DomainError
from sparse_mfm.domain.lasso import (
    LassoFit,
    lambda_for_support,
    lambda_grid,
    lambda_max,
    lasso_path,
    lasso_solve,
    standardize,
)


def kkt_violation(X, y, fit):
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    grad = Xc.T @ (yc - Xc @ fit.beta) / len(y)
    active = fit.beta != 0
    worst = 0.0
    if active.any():
        worst = np.max(np.abs(grad[active] - fit.lam * np.sign(fit.beta[active])))
    if (~active).any():
        worst = max(worst, np.max(np.abs(grad[~active])) - fit.lam)
    return worst


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


class TestLassoSolve:
    """Tests for lasso_solve."""

    def test_kkt_on_random_instances(self):
        """Converged solutions satisfy the optimality conditions."""
        rng = np.random.default_rng(0)
        for _ in range(50):
            X = rng.normal(size=(50, 100))
            beta = np.zeros(100)
            beta[:5] = rng.normal(size=5)
            y = X @ beta + rng.normal(size=50)
            lam = 0.2 * lambda_max(X, y)
            fit = lasso_solve(X, y, lam, tol=1e-10)
            assert fit.converged
            assert kkt_violation(X, y, fit) < 1e-6

    def test_orthonormal_design_is_soft_thresholding(self):
        """With X'X/n = I the solution is the soft-thresholded OLS estimate."""
        rng = np.random.default_rng(1)
        n, p = 60, 8
        raw = rng.normal(size=(n, p))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        X = np.sqrt(n) * q
        y = rng.normal(size=n) + X @ np.linspace(-1, 1, p)
        lam = 0.3
        fit = lasso_solve(X, y, lam, tol=1e-14)
        expected = soft_threshold(X.T @ (y - y.mean()) / n, lam)
        assert fit.beta == pytest.approx(expected, abs=1e-8)

    def test_zero_penalty_matches_ols(self):
        """lambda = 0 recovers least squares."""
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 5))
        y = X @ np.array([1.0, -2.0, 0.5, 0.0, 3.0]) + 0.1 * rng.normal(size=50)
        fit = lasso_solve(X, y, 0.0, tol=1e-13)
        Z = np.column_stack([np.ones(50), X])
        coef = np.linalg.lstsq(Z, y, rcond=None)[0]
        assert fit.beta == pytest.approx(coef[1:], abs=1e-6)
        assert fit.intercept == pytest.approx(coef[0], abs=1e-6)

    def test_above_lambda_max_is_all_zero(self):
        """At or above lambda_max nothing is selected."""
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(30, 4)), rng.normal(size=30)
        fit = lasso_solve(X, y, lambda_max(X, y))
        assert fit.support == ()
        assert fit.intercept == pytest.approx(y.mean())

    def test_lambda_max_value(self):
        """lambda_max = max |X'y| / n on centred data."""
        X = np.array([[1.0, 0.0], [2.0, 1.0], [3.0, 0.0], [4.0, 1.0]])
        y = np.array([1.0, 2.0, 2.0, 3.0])
        Xc, yc = X - X.mean(axis=0), y - y.mean()
        assert lambda_max(X, y) == pytest.approx(np.max(np.abs(Xc.T @ yc)) / 4)

    def test_objective_trace_is_non_increasing(self):
        """Each coordinate sweep lowers the penalised objective."""
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 20))
        y = X[:, 0] - X[:, 1] + rng.normal(size=40)
        fit = lasso_solve(X, y, 0.05, record_objective=True)
        trace = np.array(fit.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert fit.objective(X, y) == pytest.approx(trace[-1], rel=1e-9)

    def test_non_convergence_is_reported(self):
        """Hitting max_iter returns converged = False."""
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 40))
        y = rng.normal(size=30)
        fit = lasso_solve(X, y, 1e-4, tol=1e-16, max_iter=2)
        assert not fit.converged
        assert fit.iterations == 2

    def test_rejects_bad_inputs(self):
        """Negative penalties and NaN inputs are domain errors."""
        X = np.ones((3, 1))
        with pytest.raises(DomainError):
            lasso_solve(X, np.arange(3.0), -1.0)
        with pytest.raises(DomainError):
            lasso_solve(X, np.array([1.0, np.nan, 2.0]), 0.1)

    def test_scaling_response_and_penalty(self):
        """Scaling y and lambda by c scales the coefficients by c."""
        rng = np.random.default_rng(13)
        X = rng.normal(size=(60, 8))
        y = X[:, :3] @ np.array([1.0, -0.5, 0.8]) + rng.normal(size=60)
        base = lasso_solve(X, y, 0.1, tol=1e-13)
        scaled = lasso_solve(X, 3.0 * y, 0.3, tol=1e-13)
        assert scaled.beta == pytest.approx(3.0 * base.beta, abs=1e-8)
        assert scaled.support == base.support

    def test_l1_norm_shrinks_with_the_penalty(self):
        """A smaller penalty never gives a smaller L1 norm."""
        rng = np.random.default_rng(14)
        X = rng.normal(size=(60, 15))
        y = X[:, :4] @ rng.normal(size=4) + rng.normal(size=60)
        grid = lambda_grid(lambda_max(X, y), 30)
        norms = np.array([np.abs(fit.beta).sum() for fit in lasso_path(X, y, grid, tol=1e-12).fits])
        assert np.all(np.diff(norms) >= -1e-8)

    def test_support_must_match_coefficients(self):
        """LassoFit checks its support against the nonzero coefficients."""
        with pytest.raises(DomainError):
            LassoFit(lam=0.1, beta=np.array([0.0, 1.0]), intercept=0.0, support=(0,), iterations=1, converged=True)


class TestPenaltySelection:
    """Tests for the lambda grid, path and lambda_for_support."""

    def test_grid_is_geometric(self):
        """The grid runs from lambda_max down to floor * lambda_max."""
        grid = lambda_grid(2.0, 100, 1e-3)
        assert grid[0] == pytest.approx(2.0)
        assert grid[-1] == pytest.approx(2e-3)
        ratios = grid[1:] / grid[:-1]
        assert ratios == pytest.approx(np.full(99, ratios[0]))

    def test_support_cap(self):
        """The chosen fit is the smallest grid penalty whose support is within s_max."""
        rng = np.random.default_rng(6)
        X = rng.normal(size=(80, 40))
        y = X[:, :10] @ rng.uniform(0.5, 1.5, 10) + rng.normal(size=80)
        s_max = 5
        lam, fit = lambda_for_support(X, y, s_max=s_max)
        assert fit.support_size <= s_max

        Xs, yc, _ = standardize(X, y)
        grid = lambda_grid(lambda_max(Xs, yc))
        sizes = lasso_path(Xs, yc, grid).support_sizes
        last_within = max(i for i, size in enumerate(sizes) if size <= s_max)
        assert lam == grid[last_within]

    def test_non_monotone_paths_use_the_smallest_valid_penalty(self):
        """On correlated designs a support that exceeds the cap and falls back does not end the search."""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            X = rng.normal(size=(40, 2)) @ rng.normal(size=(2, 12)) + 0.3 * rng.normal(size=(40, 12))
            y = X[:, :3] @ rng.normal(size=3) + rng.normal(size=40)
            Xs, yc, _ = standardize(X, y)
            grid = lambda_grid(lambda_max(Xs, yc))
            sizes = lasso_path(Xs, yc, grid).support_sizes
            for s_max in range(1, 10):
                lam, fit = lambda_for_support(X, y, s_max=s_max)
                assert lam == grid[max(i for i, size in enumerate(sizes) if size <= s_max)]
                assert fit.support_size <= s_max

    def test_large_cap_takes_the_last_grid_point(self):
        """With s_max >= p every grid point qualifies."""
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 6))
        y = X @ rng.normal(size=6) + rng.normal(size=50)
        lam, _ = lambda_for_support(X, y, s_max=6)
        Xs, yc, _ = standardize(X, y)
        assert lam == pytest.approx(lambda_grid(lambda_max(Xs, yc))[-1])

    def test_single_dominant_column(self):
        """s_max = 1 keeps the column that drives the response."""
        rng = np.random.default_rng(11)
        X = rng.normal(size=(100, 6))
        y = 5.0 * X[:, 2] + 0.1 * rng.normal(size=100)
        _, fit = lambda_for_support(X, y, s_max=1)
        assert tuple(fit.support) == (2,)

    def test_planted_support_is_recovered(self):
        """Three strong columns out of ten are found with s_max = 3."""
        rng = np.random.default_rng(12)
        X = rng.normal(size=(200, 10))
        y = X[:, [1, 4, 7]] @ np.array([2.0, -1.5, 1.0]) + 0.1 * rng.normal(size=200)
        _, fit = lambda_for_support(X, y, s_max=3)
        assert set(fit.support) == {1, 4, 7}

    def test_coefficients_are_on_the_original_scale(self):
        """Predictions from the returned fit equal those on the standardised scale."""
        rng = np.random.default_rng(7)
        X = rng.normal(size=(60, 6)) * np.array([1.0, 10.0, 0.1, 2.0, 5.0, 0.5])
        y = X[:, 1] * 0.1 + X[:, 2] * 5 + rng.normal(size=60)
        lam, fit = lambda_for_support(X, y, s_max=3)
        Xs, yc, scaling = standardize(X, y)
        std_fit = lasso_solve(Xs, yc, lam, tol=1e-12)
        assert X @ fit.beta + fit.intercept == pytest.approx(Xs @ std_fit.beta + scaling.y_mean, abs=1e-5)

    def test_constant_response_selects_nothing(self):
        """With lambda_max = 0 the empty model is returned."""
        X = np.random.default_rng(8).normal(size=(20, 3))
        lam, fit = lambda_for_support(X, np.full(20, 0.5))
        assert lam == 0.0
        assert fit.support == ()
        assert fit.intercept == 0.5

    def test_invalid_s_max(self):
        """s_max must be at least one."""
        with pytest.raises(DomainError):
            lambda_for_support(np.ones((5, 2)), np.arange(5.0), s_max=0)
