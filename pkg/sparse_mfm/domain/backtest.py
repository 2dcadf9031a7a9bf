"""
Weekly-refit long/short alpha portfolio.

Every out-of-sample week the model is refitted on the rolling window that ends
the week before, securities with significant positive (negative) alpha form the
long (short) leg, and both legs are equal-weighted. ``net_change`` is the value
change of holding $1 long and $1 short: long_return - short_return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd

from ..logging import get_logger
from .errors import DomainError, SparseMfmError
from .panel import ReturnsPanel
from .pipeline import EstimationSettings, ReducedUniverse, StudyInputs, fit_with_universe, run_study

log = get_logger(__name__)

DEFAULT_QUANTILES: Tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
LEDGER_COLUMNS = ["week", "long_count", "short_count", "long_return", "short_return", "net_change", "cumulative"]


class AlphaModel(Protocol):
    ticker: str
    alpha: float
    intercept_p: float


@dataclass(frozen=True)
class AlphaEstimate:
    """Minimal fitted alpha record; ``SecurityModel`` carries the same attributes."""

    ticker: str
    alpha: float
    intercept_p: float


@dataclass(frozen=True)
class PortfolioWeek:
    week: pd.Timestamp
    long_members: Tuple[str, ...]
    short_members: Tuple[str, ...]
    long_return: float
    short_return: float
    net_change: float

    def __post_init__(self):
        overlap = set(self.long_members) & set(self.short_members)
        if overlap:
            raise DomainError(f"{self.week}: securities on both legs: {sorted(overlap)}")
        if self.net_change != self.long_return - self.short_return:
            raise DomainError(f"{self.week}: net change must equal long minus short return")


@dataclass(frozen=True)
class GapWeek:
    week: pd.Timestamp
    reason: str


@dataclass(frozen=True, eq=False)
class BacktestLedger:
    weeks: Tuple[PortfolioWeek, ...] = ()
    gaps: Tuple[GapWeek, ...] = ()

    def __post_init__(self):
        dates = [w.week for w in self.weeks]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DomainError("ledger weeks must be strictly increasing")

    @property
    def net_changes(self) -> np.ndarray:
        return np.array([w.net_change for w in self.weeks], dtype=float)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.net_changes)

    def mean_change_t_stat(self) -> float:
        """t statistic of the mean weekly net change (NaN with fewer than two weeks)."""
        changes = self.net_changes
        if len(changes) < 2:
            return float("nan")
        mean = float(changes.mean())
        sd = float(changes.std(ddof=1))
        if sd == 0.0:
            return 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return mean / (sd / math.sqrt(len(changes)))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "week": [w.week.strftime("%Y-%m-%d") for w in self.weeks],
                "long_count": [len(w.long_members) for w in self.weeks],
                "short_count": [len(w.short_members) for w in self.weeks],
                "long_return": [w.long_return for w in self.weeks],
                "short_return": [w.short_return for w in self.weeks],
                "net_change": self.net_changes,
                "cumulative": self.cumulative,
            },
            columns=LEDGER_COLUMNS,
        )
        return frame


@dataclass(frozen=True, eq=False)
class WeekFit:
    """Models refitted for one out-of-sample week, or the reason the refit was skipped."""

    week: pd.Timestamp
    models: Optional[Tuple[AlphaModel, ...]] = None
    gap: Optional[str] = None

    @property
    def is_gap(self) -> bool:
        return self.models is None


Refit = Callable[[StudyInputs], Sequence[AlphaModel]]


def rank_by_alpha(models: Sequence[AlphaModel]) -> List[AlphaModel]:
    """Descending alpha; equal alphas in ticker order."""
    return sorted(models, key=lambda m: (-m.alpha, m.ticker))


def _leg_size(quantile: float, available: int) -> int:
    if available == 0:
        return 0
    return max(1, math.floor(quantile * available + 1e-9))


def build_portfolio(
    ranked: Sequence[AlphaModel],
    quantile: float = 0.5,
    sig_level: float = 0.05,
) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Top ``quantile`` of the significant positive alphas long, of the significant negative alphas short."""
    if not (0 < quantile <= 1):
        raise DomainError(f"quantile must be in (0, 1], got {quantile}")
    positive = [m for m in rank_by_alpha(ranked) if m.alpha > 0 and m.intercept_p < sig_level]
    negative = sorted(
        (m for m in ranked if m.alpha < 0 and m.intercept_p < sig_level),
        key=lambda m: (m.alpha, m.ticker),
    )
    long_leg = tuple(m.ticker for m in positive[: _leg_size(quantile, len(positive))])
    short_leg = tuple(m.ticker for m in negative[: _leg_size(quantile, len(negative))])
    return long_leg, short_leg


def _leg_return(members: Sequence[str], week_returns: pd.Series) -> Tuple[Tuple[str, ...], float]:
    observed = tuple(t for t in members if t in week_returns.index and pd.notna(week_returns[t]))
    if not observed:
        return (), 0.0
    return observed, float(np.mean([week_returns[t] for t in observed]))


def realize_week(
    week: pd.Timestamp,
    long_leg: Sequence[str],
    short_leg: Sequence[str],
    week_returns: pd.Series,
) -> PortfolioWeek:
    """Equal-weighted leg returns; members without a return that week drop out."""
    long_members, long_return = _leg_return(long_leg, week_returns)
    short_members, short_return = _leg_return(short_leg, week_returns)
    return PortfolioWeek(
        week=pd.Timestamp(week),
        long_members=long_members,
        short_members=short_members,
        long_return=long_return,
        short_return=short_return,
        net_change=long_return - short_return,
    )


def refit_weeks(
    inputs: StudyInputs,
    weeks: Sequence[pd.Timestamp],
    refit: Refit,
    window_weeks: int = 156,
    min_window_weeks: int = 52,
) -> List[WeekFit]:
    """Refit on the ``window_weeks`` dates strictly before each out-of-sample week."""
    if min_window_weeks < 1 or window_weeks < min_window_weeks:
        raise DomainError(f"need 1 <= min_window_weeks <= window_weeks, got {min_window_weeks}, {window_weeks}")
    dates = inputs.securities.dates
    fits: List[WeekFit] = []
    for week in weeks:
        week = pd.Timestamp(week)
        end = int(dates.searchsorted(week, side="left"))
        history = dates[max(0, end - window_weeks): end]
        if len(history) < min_window_weeks:
            reason = f"{len(history)} weeks of history, need {min_window_weeks}"
            log.warning(f"Skipping refit for {week.date()}: {reason}")
            fits.append(WeekFit(week=week, gap=reason))
            continue
        try:
            models = tuple(refit(inputs.restrict(history)))
        except SparseMfmError as exc:
            log.warning(f"Skipping refit for {week.date()}: {exc}")
            fits.append(WeekFit(week=week, gap=str(exc)))
            continue
        log.debug(f"Refit for {week.date()} on {len(history)} weeks: {len(models)} securities")
        fits.append(WeekFit(week=week, models=models))
    return fits


def ledger_from_fits(
    fits: Sequence[WeekFit],
    realized: ReturnsPanel,
    quantile: float = 0.5,
    sig_level: float = 0.05,
) -> BacktestLedger:
    weeks: List[PortfolioWeek] = []
    gaps: List[GapWeek] = []
    for fit in fits:
        if fit.is_gap:
            gaps.append(GapWeek(week=fit.week, reason=fit.gap or "refit skipped"))
            continue
        if fit.week not in realized.dates:
            gaps.append(GapWeek(week=fit.week, reason="no realised returns for this week"))
            continue
        long_leg, short_leg = build_portfolio(fit.models, quantile, sig_level)
        weeks.append(realize_week(fit.week, long_leg, short_leg, realized.frame.loc[fit.week]))
    return BacktestLedger(weeks=tuple(weeks), gaps=tuple(gaps))


def run_backtest(
    inputs: StudyInputs,
    realized: ReturnsPanel,
    weeks: Sequence[pd.Timestamp],
    refit: Refit,
    quantile: float = 0.5,
    sig_level: float = 0.05,
    window_weeks: int = 156,
    min_window_weeks: int = 52,
) -> BacktestLedger:
    fits = refit_weeks(inputs, weeks, refit, window_weeks, min_window_weeks)
    ledger = ledger_from_fits(fits, realized, quantile, sig_level)
    log.info(
        f"Backtest: {len(ledger.weeks)} weeks, {len(ledger.gaps)} gaps, "
        f"cumulative change {float(ledger.cumulative[-1]) if ledger.weeks else 0.0:+.4f}"
    )
    return ledger


def quantile_sweep(
    fits: Sequence[WeekFit],
    realized: ReturnsPanel,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    sig_level: float = 0.05,
) -> Dict[float, BacktestLedger]:
    """One ledger per quantile from a single set of refits."""
    return {float(q): ledger_from_fits(fits, realized, q, sig_level) for q in quantiles}


def study_refit(settings: EstimationSettings, frozen: Optional[ReducedUniverse] = None) -> Refit:
    """Full-pipeline refit, or stage two only against a frozen universe."""

    def refit(window_inputs: StudyInputs) -> Sequence[AlphaModel]:
        if frozen is not None:
            return fit_with_universe(window_inputs, frozen, settings, aggregate=False).models
        return run_study(window_inputs, settings, aggregate=False).models

    return refit


def out_of_sample_weeks(dates: pd.DatetimeIndex, start, count: int) -> pd.DatetimeIndex:
    """The first ``count`` dates on or after ``start``."""
    begin = int(dates.searchsorted(pd.Timestamp(start), side="left"))
    selected = dates[begin: begin + count]
    if len(selected) < count:
        log.warning(f"Only {len(selected)} of {count} out-of-sample weeks are available after {start}")
    return selected
