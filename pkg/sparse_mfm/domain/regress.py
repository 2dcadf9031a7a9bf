"""
Dense OLS with classical inference.

Solves use a QR factorisation after a left-to-right rank scan, so a
collinear design is reported with the first column that depends on the
columns before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .errors import (
    DegenerateProjectionError,
    DomainError,
    InsufficientDataError,
    SingularDesignError,
)

RANK_TOL = 1e-10


def _json_float(value: float) -> Optional[float]:
    value = float(value)
    return value if np.isfinite(value) else None


@dataclass(frozen=True, eq=False)
class OlsFit:
    """
    Result of one OLS regression.

    ``se``, ``t_stats`` and ``p_values`` hold the intercept first (when one
    was fitted) followed by one entry per regressor in ``names`` order.
    """

    alpha: float
    beta: np.ndarray
    se: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r2: float
    adj_r2: float
    ss_res: float
    df_res: int
    n: int
    k: int
    names: Tuple[str, ...] = ()
    with_intercept: bool = True
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def __post_init__(self):
        if self.df_res < 1:
            raise DomainError(f"df_res must be >= 1, got {self.df_res}")
        if not (0.0 <= self.r2 <= 1.0):
            raise DomainError(f"r2 must be in [0, 1], got {self.r2}")
        if self.ss_res < 0:
            raise DomainError(f"ss_res must be non-negative, got {self.ss_res}")

    @property
    def intercept_p(self) -> float:
        return float(self.p_values[0]) if self.with_intercept else float("nan")

    @property
    def intercept_t(self) -> float:
        return float(self.t_stats[0]) if self.with_intercept else float("nan")

    @property
    def beta_p_values(self) -> np.ndarray:
        return self.p_values[1:] if self.with_intercept else self.p_values

    @property
    def beta_se(self) -> np.ndarray:
        return self.se[1:] if self.with_intercept else self.se

    def coefficient_table(self) -> pd.DataFrame:
        """Per-regressor estimate, standard error, t statistic and two-sided p-value."""
        labels = (["const"] if self.with_intercept else []) + list(self.names)
        coef = ([self.alpha] if self.with_intercept else []) + list(self.beta)
        return pd.DataFrame(
            {"coef": coef, "se": self.se, "t": self.t_stats, "p": self.p_values},
            index=pd.Index(labels, name="regressor"),
        )

    def to_dict(self) -> dict:
        return {
            "alpha": _json_float(self.alpha),
            "beta": {name: _json_float(b) for name, b in zip(self.names, self.beta)},
            "se": [_json_float(v) for v in self.se],
            "t_stats": [_json_float(v) for v in self.t_stats],
            "p_values": [_json_float(v) for v in self.p_values],
            "r2": _json_float(self.r2),
            "adj_r2": _json_float(self.adj_r2),
            "ss_res": _json_float(self.ss_res),
            "df_res": self.df_res,
            "n": self.n,
            "k": self.k,
        }


@dataclass(frozen=True)
class FTestResult:
    """Nested-model F test of a restricted fit against a full fit."""

    f_stat: float
    df1: int
    df2: int
    p_value: float
    infinite: bool = False

    def __post_init__(self):
        if not (self.f_stat >= 0):
            raise DomainError(f"f_stat must be >= 0, got {self.f_stat}")
        if not (0.0 <= self.p_value <= 1.0):
            raise DomainError(f"p_value must be in [0, 1], got {self.p_value}")

    def to_dict(self) -> dict:
        return {
            "f_stat": _json_float(self.f_stat),
            "df1": self.df1,
            "df2": self.df2,
            "p_value": self.p_value,
            "infinite": self.infinite,
        }


def independent_columns(X: np.ndarray, tol: float = RANK_TOL) -> Tuple[List[int], List[int]]:
    """
    Left-to-right rank scan.

    Returns ``(kept, dependent)`` column indices: a column is dependent when its
    residual after projecting on the kept columns before it has norm at most
    ``tol`` times the largest column norm.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("design matrix must be two-dimensional")
    if X.shape[1] == 0:
        return [], []
    scale = float(np.max(np.linalg.norm(X, axis=0)))
    threshold = tol * scale if scale > 0 else 0.0

    basis = np.empty((X.shape[0], 0))
    kept, dependent = [], []
    for j in range(X.shape[1]):
        v = X[:, j].copy()
        # two passes of Gram-Schmidt keep the residual accurate
        for _ in range(2):
            v -= basis @ (basis.T @ v)
        norm = float(np.linalg.norm(v))
        if norm <= threshold or norm == 0.0:
            dependent.append(j)
            continue
        basis = np.column_stack([basis, v / norm])
        kept.append(j)
    return kept, dependent


def _two_sided_p(t_stats: np.ndarray, df: int) -> np.ndarray:
    p = 2.0 * stats.t.sf(np.abs(t_stats), df)
    return np.clip(p, 0.0, 1.0)


def ols_fit(
    y: np.ndarray,
    X: np.ndarray,
    with_intercept: bool = True,
    names: Optional[Sequence[str]] = None,
) -> OlsFit:
    """Least squares fit of ``y`` on the columns of ``X`` (plus a constant)."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, k = X.shape
    if len(y) != n:
        raise DomainError(f"y has {len(y)} observations but X has {n} rows")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise DomainError("ols_fit requires finite inputs")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    if len(names) != k:
        raise DomainError(f"{len(names)} names given for {k} regressors")

    offset = 1 if with_intercept else 0
    df_res = n - k - offset
    if df_res < 1:
        raise InsufficientDataError(f"need more than {k + offset} observations, got {n}")

    Z = np.column_stack([np.ones(n), X]) if with_intercept else X
    _, dependent = independent_columns(Z)
    if dependent:
        column = dependent[0] - offset
        if column < 0:
            raise SingularDesignError(0, "const")
        raise SingularDesignError(column, names[column])

    Q, R = linalg.qr(Z, mode="economic")
    coef = linalg.solve_triangular(R, Q.T @ y)
    residuals = y - Z @ coef
    ss_res = float(residuals @ residuals)

    if with_intercept:
        centered = y - y.mean()
        ss_tot = float(centered @ centered)
    else:
        ss_tot = float(y @ y)
    if ss_tot <= 1e-24 * max(1.0, float(y @ y)):
        r2 = 0.0
    else:
        r2 = float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))

    sigma2 = ss_res / df_res
    r_inv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    se = np.sqrt(sigma2 * np.sum(r_inv * r_inv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.sign(coef) * np.inf))
    p_values = _two_sided_p(t_stats, df_res)

    alpha = float(coef[0]) if with_intercept else 0.0
    beta = coef[offset:]
    adj = adjusted_r2(r2, n, k) if with_intercept else 1.0 - (1.0 - r2) * n / df_res
    return OlsFit(
        alpha=alpha,
        beta=beta,
        se=se,
        t_stats=t_stats,
        p_values=p_values,
        r2=r2,
        adj_r2=float(adj),
        ss_res=ss_res,
        df_res=df_res,
        n=n,
        k=k,
        names=names,
        with_intercept=with_intercept,
        residuals=residuals,
    )


def project_out(target: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Residual of ``target`` after projection on ``base``: (I - P_base) target."""
    target = np.asarray(target, dtype=float)
    base = np.asarray(base, dtype=float)
    denom = float(base @ base)
    if denom == 0.0:
        raise DegenerateProjectionError("cannot project onto an identically zero vector")
    return target - base * (float(base @ target) / denom)


def adjusted_r2(r2: float, n: int, k: int) -> float:
    if n <= k + 1:
        raise DomainError(f"adjusted R^2 needs n > k + 1, got n={n}, k={k}")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1)


def f_test_nested(ss_r: float, ss_f: float, r2_extra: int, df_full: int) -> FTestResult:
    """F statistic for ``r2_extra`` added regressors; ``df_full`` is the full model's residual df."""
    if r2_extra < 1:
        raise DomainError(f"r2_extra must be >= 1, got {r2_extra}")
    if df_full < 1:
        raise DomainError(f"df_full must be >= 1, got {df_full}")
    if ss_f < 0:
        raise DomainError(f"ss_f must be non-negative, got {ss_f}")

    diff = ss_r - ss_f
    if diff < 0:
        if diff < -1e-10 * max(abs(ss_r), abs(ss_f), 1e-300):
            raise DomainError(f"restricted SS ({ss_r}) is below full SS ({ss_f})")
        diff = 0.0

    if diff == 0.0:
        return FTestResult(f_stat=0.0, df1=r2_extra, df2=df_full, p_value=1.0)
    if ss_f == 0.0:
        return FTestResult(f_stat=float("inf"), df1=r2_extra, df2=df_full, p_value=0.0, infinite=True)

    f_stat = (diff / r2_extra) / (ss_f / df_full)
    p_value = float(np.clip(stats.f.sf(f_stat, r2_extra, df_full), 0.0, 1.0))
    return FTestResult(f_stat=float(f_stat), df1=r2_extra, df2=df_full, p_value=p_value)


def t_cdf(x: float, df: float) -> float:
    if not np.isfinite(x):
        raise DomainError(f"t_cdf needs a finite argument, got {x}")
    if df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    return float(stats.t.cdf(x, df))


def f_cdf(x: float, df1: float, df2: float) -> float:
    if not np.isfinite(x):
        raise DomainError(f"f_cdf needs a finite argument, got {x}")
    if df1 < 1 or df2 < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if x <= 0:
        return 0.0
    return float(stats.f.cdf(x, df1, df2))
