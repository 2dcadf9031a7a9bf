"""
End-to-end estimation of the sparse multi-factor model.

Stage one reduces the ETF universe: every ETF is orthogonalised to the market
factor, clustered within its category (prototype count = PCA dimension),
and the pooled prototypes are clustered once more into the universe U.

Stage two runs per security: LASSO on U (support capped at ``s_max``), drop
selections still highly correlated with the market, add the FF5 factors back,
and refit by OLS on the original factor returns. The FF5-only fit on the same
rows gives the restricted model for the nested F test.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..logging import get_logger
from .cluster import Dendrogram, cut, distance_matrix, minimax_cluster, pca_dim
from .errors import (
    AggregationError,
    DegenerateSeriesError,
    DomainError,
    InsufficientDataError,
    SingularDesignError,
)
from .lasso import DEFAULT_MAX_ITER, DEFAULT_TOL, lambda_for_support
from .panel import (
    FactorMeta,
    ReturnsPanel,
    RiskFreeSeries,
    SecurityMeta,
    align,
    excess_returns,
    filter_coverage,
    window,
)
from .regress import FTestResult, OlsFit, f_test_nested, independent_columns, ols_fit, project_out
from .taxonomy import FF5_IDS, MARKET_ID, EtfTaxonomy, SicGroups, default_sic_groups, default_taxonomy

log = get_logger(__name__)

POOLED_KEY = "__pooled__"
# Orthogonalised residuals below this share of the original norm are exact zeros.
ZERO_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class EstimationSettings:
    """Procedural choices of the estimation recipe."""

    s_max: int = 20
    corr_cap: float = 0.90
    pca_threshold: float = 0.80
    sig_level: float = 0.05
    grid_size: int = 100
    grid_floor: float = 1e-3
    lasso_tol: float = DEFAULT_TOL
    lasso_max_iter: int = DEFAULT_MAX_ITER
    min_obs: int = 30
    workers: int = 1

    def __post_init__(self):
        errors = []
        if self.s_max < 1:
            errors.append(f"s_max must be >= 1, got {self.s_max}")
        for name in ("corr_cap", "pca_threshold", "sig_level"):
            value = getattr(self, name)
            if not (0 < value <= 1):
                errors.append(f"{name} must be in (0, 1], got {value}")
        if not (0 < self.grid_floor < 1):
            errors.append(f"grid_floor must be in (0, 1), got {self.grid_floor}")
        if self.grid_size < 1:
            errors.append(f"grid_size must be >= 1, got {self.grid_size}")
        if self.workers < 1:
            errors.append(f"workers must be >= 1, got {self.workers}")
        if errors:
            raise DomainError("Invalid estimation settings:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True, eq=False)
class StudyInputs:
    """
    Aligned excess-return inputs for one estimation window.

    ``etfs`` are ETF excess returns; ``ff5`` holds the five Fama-French
    factors (already excess / long-short returns).
    """

    securities: ReturnsPanel
    etfs: ReturnsPanel
    ff5: ReturnsPanel
    factor_meta: Mapping[str, FactorMeta] = field(default_factory=dict)
    security_meta: Mapping[str, SecurityMeta] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.securities.dates.equals(self.etfs.dates) and self.securities.dates.equals(self.ff5.dates)):
            raise DomainError("study inputs must share one date grid")
        if list(self.ff5.names) != list(FF5_IDS):
            raise DomainError(f"ff5 panel must have columns {list(FF5_IDS)}")
        clash = set(self.etfs.names) & set(FF5_IDS)
        if clash:
            raise DomainError(f"ETF tickers collide with reserved FF5 ids: {sorted(clash)}")

    @property
    def market(self) -> pd.Series:
        return self.ff5.column(MARKET_ID)

    @property
    def originals(self) -> pd.DataFrame:
        """Un-orthogonalised factor returns: ETFs followed by FF5."""
        return pd.concat([self.etfs.frame, self.ff5.frame], axis=1)

    def restrict(self, dates: pd.DatetimeIndex) -> "StudyInputs":
        return StudyInputs(
            securities=self.securities.restrict(dates),
            etfs=self.etfs.restrict(dates),
            ff5=self.ff5.restrict(dates),
            factor_meta=self.factor_meta,
            security_meta=self.security_meta,
        )


@dataclass(frozen=True, eq=False)
class ReducedUniverse:
    """Category sets A_i, within-category prototypes B_i and the final universe U."""

    categories: Dict[str, Tuple[str, ...]]
    within_category_reps: Dict[str, Tuple[str, ...]]
    final_reps: Tuple[str, ...]
    dendrograms: Dict[str, Dendrogram] = field(default_factory=dict, repr=False)
    skipped: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen: Dict[str, str] = {}
        for category, members in self.categories.items():
            for ticker in members:
                if ticker in seen:
                    raise DomainError(f"{ticker} is in categories {seen[ticker]!r} and {category!r}")
                seen[ticker] = category
        for category, reps in self.within_category_reps.items():
            outside = set(reps) - set(self.categories.get(category, ()))
            if outside:
                raise DomainError(f"B[{category!r}] has members outside its category: {sorted(outside)}")
        pooled = {t for reps in self.within_category_reps.values() for t in reps}
        outside = set(self.final_reps) - pooled
        if outside:
            raise DomainError(f"U has members outside the pooled prototypes: {sorted(outside)}")

    @property
    def p2(self) -> int:
        return len(self.final_reps)

    @property
    def pooled_reps(self) -> Tuple[str, ...]:
        return tuple(t for reps in self.within_category_reps.values() for t in reps)

    def to_dict(self) -> dict:
        return {
            "categories": {k: list(v) for k, v in self.categories.items()},
            "within_category_reps": {k: list(v) for k, v in self.within_category_reps.items()},
            "final_reps": list(self.final_reps),
            "p2": self.p2,
            "skipped": dict(self.skipped),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReducedUniverse":
        return cls(
            categories={k: tuple(v) for k, v in data["categories"].items()},
            within_category_reps={k: tuple(v) for k, v in data["within_category_reps"].items()},
            final_reps=tuple(data["final_reps"]),
            skipped=dict(data.get("skipped", {})),
        )


@dataclass(frozen=True, eq=False)
class SecurityModel:
    """
    Fitted model of one security.

    ``selected_lasso`` is the LASSO support on U, ``selected_final`` the OLS
    design actually fitted (after pruning, FF5 augmentation and collinearity
    drops) and ``significant`` the regressors with two-sided p below the
    significance level.
    """

    ticker: str
    selected_lasso: Tuple[str, ...]
    selected_final: Tuple[str, ...]
    ols: OlsFit
    ff5_ols: OlsFit
    significant: Tuple[str, ...]
    f_test: Optional[FTestResult] = None
    lasso_lambda: float = 0.0
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        outside = set(self.significant) - set(self.selected_final)
        if outside:
            raise DomainError(f"{self.ticker}: significant factors outside the fitted set: {sorted(outside)}")
        if self.f_test is not None and self.f_test.df1 != len(self.extra_factors):
            raise DomainError(f"{self.ticker}: F test df1 does not match the extra factor count")

    @property
    def alpha(self) -> float:
        return self.ols.alpha

    @property
    def intercept_p(self) -> float:
        return self.ols.intercept_p

    @property
    def ff5_intercept_p(self) -> float:
        return self.ff5_ols.intercept_p

    @property
    def adj_r2_mfm(self) -> float:
        return self.ols.adj_r2

    @property
    def adj_r2_ff5(self) -> float:
        return self.ff5_ols.adj_r2

    @property
    def extra_factors(self) -> Tuple[str, ...]:
        return tuple(f for f in self.selected_final if f not in FF5_IDS)

    def to_dict(self) -> dict:
        return {
            "ticker": self.ticker,
            "selected_lasso": list(self.selected_lasso),
            "selected_final": list(self.selected_final),
            "significant": list(self.significant),
            "lasso_lambda": self.lasso_lambda,
            "alpha": self.alpha,
            "intercept_p": self.intercept_p,
            "ff5_intercept_p": self.ff5_intercept_p,
            "adj_r2_mfm": self.adj_r2_mfm,
            "adj_r2_ff5": self.adj_r2_ff5,
            "f_test": self.f_test.to_dict() if self.f_test else None,
            "flags": list(self.flags),
            "ols": self.ols.to_dict(),
            "ff5_ols": self.ff5_ols.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class SignificanceMatrices:
    """
    Count matrix A and column-normalised proportion matrix G.

    Rows are factor classes (each FF5 factor is its own row), columns are
    2-digit SIC groups.
    """

    counts: pd.DataFrame
    proportions: pd.DataFrame
    empty_columns: Tuple[str, ...] = ()

    def __post_init__(self):
        if (self.counts.to_numpy() < 0).any():
            raise DomainError("significance counts must be non-negative")
        sums = self.proportions.sum(axis=0)
        for column in self.proportions.columns:
            if column in self.empty_columns:
                continue
            if abs(float(sums[column]) - 1.0) > 1e-12:
                raise DomainError(f"column {column!r} of G does not sum to one")

    @property
    def factor_classes(self) -> List[str]:
        return list(self.counts.index)

    @property
    def security_classes(self) -> List[str]:
        return list(self.counts.columns)

    def group_titles(self, sic_groups: Optional[SicGroups] = None) -> Dict[str, str]:
        """SIC major-group title of every column; unknown groups keep their code."""
        sic_groups = sic_groups or default_sic_groups()
        return {c: sic_groups.group_title(c) or c for c in self.security_classes}

    def percent_table(self, sic_groups: Optional[SicGroups] = None) -> pd.DataFrame:
        """G in percent; with ``sic_groups`` the columns read ``"<code> <title>"``."""
        table = self.proportions * 100.0
        if sic_groups is not None:
            titles = self.group_titles(sic_groups)
            table = table.rename(columns={c: f"{c} {titles[c]}" if titles[c] != c else c for c in table.columns})
        return table

    def to_dict(self) -> dict:
        return {
            "factor_classes": self.factor_classes,
            "security_classes": self.security_classes,
            "A": self.counts.astype(int).to_numpy().tolist(),
            "G": self.proportions.to_numpy().tolist(),
            "empty_columns": list(self.empty_columns),
        }


@dataclass(frozen=True, eq=False)
class StudyResult:
    reduced: ReducedUniverse
    models: Tuple[SecurityModel, ...]
    excluded: Dict[str, str]
    matrices: Optional[SignificanceMatrices] = None

    def model(self, ticker: str) -> SecurityModel:
        for model in self.models:
            if model.ticker == ticker:
                return model
        raise KeyError(ticker)


def build_inputs(
    securities: ReturnsPanel,
    etfs: ReturnsPanel,
    ff5: ReturnsPanel,
    rf: RiskFreeSeries,
    factor_meta: Optional[Mapping[str, FactorMeta]] = None,
    security_meta: Optional[Mapping[str, SecurityMeta]] = None,
    start=None,
    end=None,
    min_coverage: float = 2 / 3,
) -> StudyInputs:
    """Window, align, coverage-filter and convert raw returns to excess returns."""
    securities, etfs, ff5 = (window(p, start, end) for p in (securities, etfs, ff5))
    securities, etfs, ff5 = align([securities, etfs, ff5])
    rf = rf.restrict(securities.dates)
    securities = filter_coverage(securities, min_coverage)
    etfs = filter_coverage(etfs, min_coverage)
    log.info(
        f"Study window {securities.dates[0].date()}..{securities.dates[-1].date()}: "
        f"{securities.n_weeks} weeks, {len(securities.names)} securities, {len(etfs.names)} ETFs"
    )
    return StudyInputs(
        securities=excess_returns(securities, rf),
        etfs=excess_returns(etfs, rf),
        ff5=ff5,
        factor_meta=dict(factor_meta or {}),
        security_meta=dict(security_meta or {}),
    )


def orthogonalize_universe(factors: ReturnsPanel, market: pd.Series) -> ReturnsPanel:
    """
    Market first and unchanged, every other column replaced by its residual
    after projection on the market (over the weeks that column is observed).
    """
    market = market.reindex(factors.dates)
    if market.isna().any():
        raise DegenerateSeriesError(f"market series {market.name!r} must be fully observed on the window")
    m = market.to_numpy(dtype=float)
    if not np.any(m != 0.0):
        raise DegenerateSeriesError(f"market series {market.name!r} is identically zero")

    columns = {market.name or MARKET_ID: market.to_numpy(dtype=float)}
    for name in factors.names:
        if name == market.name:
            continue
        target = factors.column(name).to_numpy(dtype=float)
        observed = np.isfinite(target)
        out = np.full_like(target, np.nan)
        if observed.any():
            residual = project_out(target[observed], m[observed]) if np.any(m[observed] != 0.0) else target[observed]
            if np.linalg.norm(residual) <= ZERO_RESIDUAL_TOL * np.linalg.norm(target[observed]):
                residual = np.zeros_like(residual)
            out[observed] = residual
        columns[name] = out
    return ReturnsPanel(pd.DataFrame(columns, index=factors.dates))


def _is_degenerate(series: pd.Series) -> bool:
    observed = series.dropna()
    return len(observed) < 3 or float(observed.var(ddof=0)) == 0.0


def _prototype_names(frame: pd.DataFrame, threshold: float) -> Tuple[Tuple[str, ...], Dendrogram]:
    k = pca_dim(frame, threshold)
    dendrogram = minimax_cluster(distance_matrix(frame))
    chosen = {proto for _, proto in cut(dendrogram, k)}
    names = tuple(frame.columns[i] for i in sorted(chosen))
    return names, dendrogram


def reduce_factors(
    x_tilde: ReturnsPanel,
    meta: Mapping[str, FactorMeta],
    threshold: float = 0.80,
    reserved: Sequence[str] = FF5_IDS,
) -> ReducedUniverse:
    """Two-stage prototype reduction A -> B -> U over the orthogonalised ETFs."""
    frame = x_tilde.frame
    categories: Dict[str, List[str]] = {}
    skipped: Dict[str, str] = {}
    for name in x_tilde.names:
        if name in reserved:
            continue
        entry = meta.get(name)
        if entry is None:
            log.warning(f"Factor {name} has no category metadata, leaving it out of the reduction")
            continue
        categories.setdefault(entry.category, []).append(name)

    reps: Dict[str, Tuple[str, ...]] = {}
    dendrograms: Dict[str, Dendrogram] = {}
    for category, members in categories.items():
        usable = [m for m in members if not _is_degenerate(frame[m])]
        dropped = sorted(set(members) - set(usable))
        if dropped:
            log.warning(f"Category {category!r}: dropping degenerate series {dropped}")
        if not usable:
            log.warning(f"Category {category!r}: every series is degenerate, skipping")
            skipped[category] = "all series degenerate"
            continue
        if len(usable) == 1:
            reps[category] = tuple(usable)
            continue
        reps[category], dendrograms[category] = _prototype_names(frame[usable], threshold)
        log.debug(f"Category {category!r}: {len(usable)} -> {len(reps[category])} prototypes")

    pooled = [t for t in x_tilde.names if any(t in r for r in reps.values())]
    if len(pooled) <= 1:
        final = tuple(pooled)
    else:
        final, dendrograms[POOLED_KEY] = _prototype_names(frame[pooled], threshold)

    log.info(
        f"Factor reduction: {sum(len(m) for m in categories.values())} ETFs in {len(categories)} categories "
        f"-> {len(pooled)} category prototypes -> {len(final)} in U"
    )
    return ReducedUniverse(
        categories={k: tuple(v) for k, v in categories.items()},
        within_category_reps=reps,
        final_reps=final,
        dendrograms=dendrograms,
        skipped=skipped,
    )


def _complete_rows(*parts) -> np.ndarray:
    mask = None
    for part in parts:
        observed = part.notna().to_numpy()
        if observed.ndim == 2:
            observed = observed.all(axis=1)
        mask = observed if mask is None else mask & observed
    return mask


def select_factors(
    y: pd.Series,
    x_u: pd.DataFrame,
    settings: EstimationSettings = EstimationSettings(),
) -> Tuple[Tuple[str, ...], float]:
    """
    LASSO support on the reduced orthogonalised design; returns (names, lambda).

    Rows are the weeks where ``y`` is observed. Unobserved residual cells on
    those rows are set to 0, the residuals' centre.
    """
    rows = y.notna().to_numpy()
    floor = max(settings.min_obs, math.ceil(x_u.shape[1] / 4))
    if int(rows.sum()) < floor:
        raise InsufficientDataError(f"{int(rows.sum())} usable weeks, need at least {floor}")
    if x_u.shape[1] == 0:
        return (), 0.0
    design = x_u.to_numpy(dtype=float)[rows]
    gaps = np.isnan(design)
    if gaps.any():
        log.debug(f"{y.name}: {int(gaps.sum())} unobserved residual cells set to 0")
        design = np.where(gaps, 0.0, design)
    lam, fit = lambda_for_support(
        design,
        y.to_numpy(dtype=float)[rows],
        s_max=settings.s_max,
        grid_size=settings.grid_size,
        grid_floor=settings.grid_floor,
        tol=settings.lasso_tol,
        max_iter=settings.lasso_max_iter,
    )
    return tuple(x_u.columns[j] for j in fit.support), lam


def prune_and_augment(
    selected: Sequence[str],
    originals: pd.DataFrame,
    market: pd.Series,
    ff5_ids: Sequence[str] = FF5_IDS,
    corr_cap: float = 0.90,
) -> Tuple[str, ...]:
    """Drop selections with |corr(original, market)| > corr_cap, then add the FF5 ids first."""
    kept: List[str] = []
    for name in selected:
        if name in ff5_ids or name in kept:
            continue
        corr = originals[name].corr(market)
        if np.isfinite(corr) and abs(corr) > corr_cap:
            log.debug(f"Pruning {name}: |corr with market| = {abs(corr):.3f} > {corr_cap}")
            continue
        kept.append(name)
    return tuple(ff5_ids) + tuple(kept)


def fit_security(
    ticker: str,
    y: pd.Series,
    final_set: Sequence[str],
    originals: pd.DataFrame,
    ff5_ids: Sequence[str] = FF5_IDS,
    sig_level: float = 0.05,
    selected_lasso: Sequence[str] = (),
    lasso_lambda: float = 0.0,
    min_obs: int = 30,
) -> SecurityModel:
    """
    Second-stage OLS on original factors plus the FF5-restricted comparison fit.

    Both fits use the weeks where ``y`` and every regressor are observed. While
    fewer than ``min_obs`` such weeks remain, the extra factor with the most
    gaps on ``y``'s weeks is dropped and flagged.
    """
    final_set = list(final_set)
    flags: List[str] = []
    observed = y.notna().to_numpy()
    rows = _complete_rows(y, originals.loc[:, final_set])
    sparse: List[str] = []
    while int(rows.sum()) < min_obs:
        extras = [f for f in final_set if f not in ff5_ids]
        if not extras:
            break
        gaps = originals.loc[observed, extras].isna().sum(axis=0).to_numpy()
        if gaps.max() == 0:
            break
        worst = extras[int(gaps.argmax())]
        final_set.remove(worst)
        sparse.append(worst)
        rows = _complete_rows(y, originals.loc[:, final_set])
    if sparse:
        log.warning(f"{ticker}: dropping sparsely observed factors {sparse}")
        flags.append(f"sparse coverage columns dropped: {','.join(sparse)}")
    if int(rows.sum()) < min_obs:
        raise InsufficientDataError(f"{int(rows.sum())} usable weeks, need at least {min_obs}")

    design = originals.loc[:, final_set]
    yv = y.to_numpy(dtype=float)[rows]
    X = design.to_numpy(dtype=float)[rows]

    n = len(yv)
    kept_idx, dependent = independent_columns(np.column_stack([np.ones(n), X]))
    if 0 in dependent:
        raise SingularDesignError(0, "const")
    kept = [final_set[j - 1] for j in kept_idx if j > 0]
    dropped = [final_set[j - 1] for j in dependent]
    if dropped:
        log.warning(f"{ticker}: dropping collinear columns {dropped}")
        flags.append(f"collinear columns dropped: {','.join(dropped)}")

    full = ols_fit(yv, design[kept].to_numpy(dtype=float)[rows], names=kept)
    restricted_names = [f for f in kept if f in ff5_ids]
    restricted = ols_fit(yv, design[restricted_names].to_numpy(dtype=float)[rows], names=restricted_names)

    extras = [f for f in kept if f not in ff5_ids]
    f_test = None
    if extras:
        f_test = f_test_nested(restricted.ss_res, full.ss_res, len(extras), full.df_res)
        if f_test.infinite:
            flags.append("infinite F statistic")
    else:
        flags.append("no extra factors")

    significant = tuple(name for name, p in zip(full.names, full.beta_p_values) if p < sig_level)
    return SecurityModel(
        ticker=ticker,
        selected_lasso=tuple(selected_lasso),
        selected_final=tuple(kept),
        ols=full,
        ff5_ols=restricted,
        significant=significant,
        f_test=f_test,
        lasso_lambda=lasso_lambda,
        flags=tuple(flags),
    )


def significance_matrices(
    models: Sequence[SecurityModel],
    sec_meta: Mapping[str, SecurityMeta],
    factor_meta: Mapping[str, FactorMeta],
    taxonomy: Optional[EtfTaxonomy] = None,
    ff5_ids: Sequence[str] = FF5_IDS,
) -> SignificanceMatrices:
    """a[b, d] = number of significant factors of class b over the securities in SIC group d."""
    taxonomy = taxonomy or default_taxonomy()
    rows = list(ff5_ids) + list(taxonomy.classes)

    cells: Dict[Tuple[str, str], int] = {}
    columns = set()
    for model in models:
        meta = sec_meta.get(model.ticker)
        if meta is None:
            raise AggregationError("security", model.ticker)
        column = meta.class_id
        columns.add(column)
        for factor in model.significant:
            if factor in ff5_ids:
                row = factor
            else:
                entry = factor_meta.get(factor)
                if entry is None:
                    raise AggregationError("factor", factor)
                row = entry.factor_class
            cells[(row, column)] = cells.get((row, column), 0) + 1

    ordered = sorted(columns)
    counts = pd.DataFrame(0, index=pd.Index(rows, name="factor_class"), columns=pd.Index(ordered, name="sic_group"))
    for (row, column), count in cells.items():
        counts.loc[row, column] = count

    totals = counts.sum(axis=0)
    empty = tuple(c for c in ordered if totals[c] == 0)
    if empty:
        log.warning(f"SIC groups without any significant factor: {list(empty)}")
    proportions = counts.astype(float).div(totals.where(totals > 0, 1), axis=1)
    return SignificanceMatrices(counts=counts, proportions=proportions, empty_columns=empty)


def factor_level_counts(models: Sequence[SecurityModel]) -> pd.Series:
    """Number of securities in which each factor is significant; ``len`` of the result is p3."""
    counts: Dict[str, int] = {}
    for model in models:
        for factor in model.significant:
            counts[factor] = counts.get(factor, 0) + 1
    series = pd.Series(counts, dtype=int, name="securities")
    if series.empty:
        return series
    order = sorted(series.index, key=lambda f: (-series[f], f))
    return series.loc[order]


def support_summary(models: Sequence[SecurityModel]) -> dict:
    """Mean selection sizes and their histograms across securities."""
    lasso = [len(m.selected_lasso) for m in models]
    final = [len(m.selected_final) for m in models]
    significant = [len(m.significant) for m in models]

    def hist(sizes: List[int]) -> Dict[int, int]:
        values, counts = np.unique(sizes, return_counts=True) if sizes else ([], [])
        return {int(v): int(c) for v, c in zip(values, counts)}

    return {
        "securities": len(models),
        "mean_lasso_selected": float(np.mean(lasso)) if lasso else 0.0,
        "mean_final": float(np.mean(final)) if final else 0.0,
        "mean_significant": float(np.mean(significant)) if significant else 0.0,
        "lasso_histogram": hist(lasso),
        "significant_histogram": hist(significant),
    }


def _map(func: Callable, items: Sequence, workers: int) -> List:
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def fit_with_universe(
    inputs: StudyInputs,
    reduced: ReducedUniverse,
    settings: EstimationSettings = EstimationSettings(),
    x_tilde: Optional[ReturnsPanel] = None,
    aggregate: bool = True,
) -> StudyResult:
    """Stage two only: per-security selection and OLS against a given universe U."""
    if x_tilde is None:
        x_tilde = orthogonalize_universe(inputs.etfs, inputs.market)
    x_u = x_tilde.frame.loc[:, list(reduced.final_reps)]
    originals = inputs.originals
    market = inputs.market

    def estimate(ticker: str):
        y = inputs.securities.column(ticker)
        try:
            selected, lam = select_factors(y, x_u, settings)
            final = prune_and_augment(selected, originals, market, FF5_IDS, settings.corr_cap)
            return fit_security(
                ticker, y, final, originals, FF5_IDS, settings.sig_level,
                selected_lasso=selected, lasso_lambda=lam, min_obs=settings.min_obs,
            )
        except (InsufficientDataError, SingularDesignError, DegenerateSeriesError) as exc:
            return str(exc)

    outcomes = _map(estimate, inputs.securities.names, settings.workers)
    models: List[SecurityModel] = []
    excluded: Dict[str, str] = {}
    for ticker, outcome in zip(inputs.securities.names, outcomes):
        if isinstance(outcome, SecurityModel):
            models.append(outcome)
        else:
            excluded[ticker] = outcome
    if excluded:
        log.warning(f"Excluded {len(excluded)} securities: {sorted(excluded)[:10]}")
    log.info(f"Fitted {len(models)} securities against |U| = {reduced.p2}")

    matrices = None
    if aggregate and models:
        matrices = significance_matrices(models, inputs.security_meta, inputs.factor_meta)
    return StudyResult(reduced=reduced, models=tuple(models), excluded=excluded, matrices=matrices)


def run_study(
    inputs: StudyInputs,
    settings: EstimationSettings = EstimationSettings(),
    aggregate: bool = True,
) -> StudyResult:
    """Full recipe: orthogonalise, reduce, then fit every security."""
    x_tilde = orthogonalize_universe(inputs.etfs, inputs.market)
    reduced = reduce_factors(x_tilde, inputs.factor_meta, settings.pca_threshold)
    return fit_with_universe(inputs, reduced, settings, x_tilde=x_tilde, aggregate=aggregate)
