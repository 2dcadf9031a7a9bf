"""
LASSO by cyclic coordinate descent.

Minimises (1/2n)||y - Xb||^2 + lam * ||b||_1 with an unpenalised intercept,
handled by centring X and y. ``lambda_for_support`` walks a warm-started
geometric path down from lambda_max and returns the smallest grid penalty
whose support stays within a size cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from ..logging import get_logger
from .errors import DomainError

log = get_logger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class LassoFit:
    lam: float
    beta: np.ndarray
    intercept: float
    support: Tuple[int, ...]
    iterations: int
    converged: bool
    objective_trace: Tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"lambda must be non-negative, got {self.lam}")
        expected = tuple(int(j) for j in np.flatnonzero(self.beta))
        if expected != tuple(self.support):
            raise DomainError("support does not match the nonzero coefficients")

    @property
    def support_size(self) -> int:
        return len(self.support)

    def objective(self, X: np.ndarray, y: np.ndarray) -> float:
        """Penalised objective evaluated on the centred data."""
        Xc, yc, _, _ = _center(X, y)
        resid = yc - Xc @ self.beta
        return float(resid @ resid) / (2 * len(yc)) + self.lam * float(np.abs(self.beta).sum())


@dataclass(frozen=True, eq=False)
class LassoPath:
    lambdas: np.ndarray
    fits: Tuple[LassoFit, ...]

    def __post_init__(self):
        if len(self.lambdas) != len(self.fits):
            raise DomainError("one fit per lambda is required")
        if len(self.lambdas) > 1 and not np.all(np.diff(self.lambdas) < 0):
            raise DomainError("path lambdas must be strictly decreasing")

    @property
    def support_sizes(self) -> List[int]:
        return [fit.support_size for fit in self.fits]


@dataclass(frozen=True, eq=False)
class Standardization:
    """Column means/scales and response mean used to map coefficients back."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def to_original(self, beta_std: np.ndarray) -> Tuple[np.ndarray, float]:
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(self.x_scale > 0, beta_std / self.x_scale, 0.0)
        intercept = self.y_mean - float(self.x_mean @ beta)
        return beta, intercept


def _check_inputs(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DomainError("design matrix must be two-dimensional")
    if X.shape[0] != len(y):
        raise DomainError(f"X has {X.shape[0]} rows but y has {len(y)} entries")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DomainError("LASSO inputs must be finite (no NaN)")
    return X, y


def _center(X: np.ndarray, y: np.ndarray):
    X, y = _check_inputs(X, y)
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    return X - x_mean, y - y_mean, x_mean, y_mean


def standardize(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Standardization]:
    """Centre ``y``; centre and scale ``X`` to unit sample standard deviation."""
    Xc, yc, x_mean, y_mean = _center(X, y)
    ddof = 1 if Xc.shape[0] > 1 else 0
    scale = Xc.std(axis=0, ddof=ddof)
    safe = np.where(scale > 0, scale, 1.0)
    Xs = np.where(scale > 0, Xc / safe, 0.0)
    return Xs, yc, Standardization(x_mean=x_mean, x_scale=scale, y_mean=y_mean)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty with an all-zero solution: ||X'y||_inf / n on centred data."""
    Xc, yc, _, _ = _center(X, y)
    if Xc.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Xc.T @ yc))) / len(yc)


def lambda_grid(lam_max: float, grid_size: int = 100, grid_floor: float = 1e-3) -> np.ndarray:
    if grid_size < 1:
        raise DomainError(f"grid_size must be >= 1, got {grid_size}")
    if not (0 < grid_floor < 1):
        raise DomainError(f"grid_floor must be in (0, 1), got {grid_floor}")
    if grid_size == 1:
        return np.array([lam_max])
    return lam_max * np.power(grid_floor, np.arange(grid_size) / (grid_size - 1))


@njit(cache=True, nogil=True)
def _cd_sweep(X, resid, beta, col_sq, lam):
    n, p = X.shape
    max_change = 0.0
    for j in range(p):
        if col_sq[j] == 0.0:
            continue
        old = beta[j]
        rho = 0.0
        for i in range(n):
            rho += X[i, j] * resid[i]
        z = col_sq[j] / n
        rho = rho / n + z * old
        if rho > lam:
            new = (rho - lam) / z
        elif rho < -lam:
            new = (rho + lam) / z
        else:
            new = 0.0
        if new != old:
            delta = new - old
            for i in range(n):
                resid[i] -= X[i, j] * delta
            beta[j] = new
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


def lasso_solve(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta0: Optional[np.ndarray] = None,
    record_objective: bool = False,
) -> LassoFit:
    """
    Cyclic coordinate descent with soft-thresholding updates.

    Stops when the largest coefficient change in a sweep falls below ``tol``;
    reaching ``max_iter`` sweeps returns ``converged=False``.
    """
    if not np.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be a finite non-negative number, got {lam}")
    Xc, yc, x_mean, y_mean = _center(X, y)
    n, p = Xc.shape

    if p == 0 or lam >= lambda_max(Xc, yc):
        beta = np.zeros(p)
        return LassoFit(lam=float(lam), beta=beta, intercept=y_mean, support=(), iterations=0, converged=True)

    Xf = np.asfortranarray(Xc)
    col_sq = np.einsum("ij,ij->j", Xf, Xf)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    resid = yc - Xf @ beta

    trace: List[float] = []
    converged = False
    iterations = 0
    while iterations < max_iter:
        change = _cd_sweep(Xf, resid, beta, col_sq, float(lam))
        iterations += 1
        if record_objective:
            trace.append(float(resid @ resid) / (2 * n) + lam * float(np.abs(beta).sum()))
        if change < tol:
            converged = True
            break

    if not converged:
        log.warning(f"Coordinate descent did not converge in {max_iter} sweeps (lambda={lam:.3e})")

    support = tuple(int(j) for j in np.flatnonzero(beta))
    return LassoFit(
        lam=float(lam),
        beta=beta,
        intercept=y_mean - float(x_mean @ beta),
        support=support,
        iterations=iterations,
        converged=converged,
        objective_trace=tuple(trace),
    )


def lasso_path(
    X: np.ndarray,
    y: np.ndarray,
    lambdas: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LassoPath:
    """Solve along decreasing ``lambdas``, warm-starting each fit from the previous one."""
    lambdas = np.asarray(lambdas, dtype=float)
    fits: List[LassoFit] = []
    beta = None
    for lam in lambdas:
        fit = lasso_solve(X, y, lam, tol=tol, max_iter=max_iter, beta0=beta)
        fits.append(fit)
        beta = fit.beta
    return LassoPath(lambdas=lambdas, fits=tuple(fits))


def lambda_for_support(
    X: np.ndarray,
    y: np.ndarray,
    s_max: int = 20,
    grid_size: int = 100,
    grid_floor: float = 1e-3,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Tuple[float, LassoFit]:
    """
    Smallest grid penalty whose fit keeps at most ``s_max`` nonzero coefficients.

    Columns are standardised before solving; the returned fit carries
    coefficients on the original scale and the penalty on the standardised one.
    The whole warm-started grid is walked: supports need not grow
    monotonically, so a later point may fall back under the cap.
    """
    if s_max < 1:
        raise DomainError(f"s_max must be >= 1, got {s_max}")
    Xs, yc, scaling = standardize(X, y)
    lam_max = lambda_max(Xs, yc)
    p = Xs.shape[1]

    if lam_max == 0.0:
        return 0.0, LassoFit(lam=0.0, beta=np.zeros(p), intercept=scaling.y_mean, support=(), iterations=0, converged=True)

    chosen: Optional[LassoFit] = None
    beta = None
    for lam in lambda_grid(lam_max, grid_size, grid_floor):
        fit = lasso_solve(Xs, yc, lam, tol=tol, max_iter=max_iter, beta0=beta)
        beta = fit.beta
        if fit.support_size <= s_max:
            chosen = fit
    assert chosen is not None, "lambda_max always yields an empty support"

    beta_orig, intercept = scaling.to_original(chosen.beta)
    result = LassoFit(
        lam=chosen.lam,
        beta=beta_orig,
        intercept=intercept,
        support=chosen.support,
        iterations=chosen.iterations,
        converged=chosen.converged,
    )
    return chosen.lam, result
