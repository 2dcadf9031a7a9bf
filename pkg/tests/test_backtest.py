"""
Tests for the weekly-refit long/short backtest.
"""

import numpy as np
import pandas as pd
import pytest

from fixtures_world import ff5_alpha_refit, small_world, weekly_dates, world_inputs
from sparse_mfm.domain.backtest import (
    LEDGER_COLUMNS,
    AlphaEstimate,
    BacktestLedger,
    PortfolioWeek,
    WeekFit,
    build_portfolio,
    ledger_from_fits,
    out_of_sample_weeks,
    quantile_sweep,
    rank_by_alpha,
    realize_week,
    refit_weeks,
    run_backtest,
    study_refit,
)
from sparse_mfm.domain.errors import DomainError, InsufficientDataError
from sparse_mfm.domain.pipeline import EstimationSettings, StudyInputs, orthogonalize_universe, reduce_factors


def estimates(alphas, p=0.01):
    return [AlphaEstimate(ticker=t, alpha=a, intercept_p=p) for t, a in alphas.items()]


def portfolio_week(day, net):
    return PortfolioWeek(
        week=pd.Timestamp(day), long_members=("A",), short_members=("B",),
        long_return=net, short_return=0.0, net_change=net,
    )


class TestPortfolio:
    """Tests for ranking and leg construction."""

    def test_rank_ties_break_on_ticker(self):
        """Descending alpha, equal alphas in ticker order."""
        ranked = rank_by_alpha(estimates({"B": 0.01, "A": 0.01, "C": 0.02}))
        assert [m.ticker for m in ranked] == ["C", "A", "B"]

    def test_legs_take_the_top_quantile(self):
        """Floor of quantile times the significant count, strongest first."""
        models = estimates({f"P{i}": 0.01 * (i + 1) for i in range(10)})
        models += estimates({f"N{i}": -0.01 * (i + 1) for i in range(5)})
        long_leg, short_leg = build_portfolio(models, quantile=0.3)
        assert long_leg == ("P9", "P8", "P7")
        assert short_leg == ("N4",)

    def test_insignificant_alphas_are_ignored(self):
        """Only alphas with p below the level enter a leg."""
        models = estimates({"A": 0.05}, p=0.2) + estimates({"B": 0.01, "C": -0.02})
        long_leg, short_leg = build_portfolio(models, quantile=0.5)
        assert long_leg == ("B",)
        assert short_leg == ("C",)

    def test_empty_side(self):
        """No significant negatives means an empty short leg."""
        long_leg, short_leg = build_portfolio(estimates({"A": 0.01, "B": 0.02}), quantile=1.0)
        assert long_leg == ("B", "A")
        assert short_leg == ()

    def test_invalid_quantile(self):
        """Quantiles must be in (0, 1]."""
        with pytest.raises(DomainError):
            build_portfolio([], quantile=0.0)


class TestRealizeWeek:
    """Tests for realize_week and PortfolioWeek."""

    def test_equal_weights(self):
        """Leg returns are plain means and net change is long minus short."""
        returns = pd.Series({"A": 0.02, "B": 0.04, "C": -0.01, "D": 0.01})
        week = realize_week(pd.Timestamp("2020-01-03"), ("A", "B"), ("C", "D"), returns)
        assert week.long_return == pytest.approx(0.03)
        assert week.short_return == pytest.approx(0.0)
        assert week.net_change == week.long_return - week.short_return

    def test_missing_return_drops_member(self):
        """A member without a return that week is left out of its leg."""
        returns = pd.Series({"A": 0.02, "B": np.nan, "C": -0.01})
        week = realize_week(pd.Timestamp("2020-01-03"), ("A", "B"), ("C", "Z"), returns)
        assert week.long_members == ("A",)
        assert week.short_members == ("C",)
        assert week.net_change == pytest.approx(0.03)

    def test_empty_leg_contributes_nothing(self):
        """An empty leg has zero return."""
        week = realize_week(pd.Timestamp("2020-01-03"), (), ("A",), pd.Series({"A": 0.05}))
        assert week.long_return == 0.0
        assert week.net_change == pytest.approx(-0.05)

    def test_legs_must_be_disjoint(self):
        """A security on both legs is rejected."""
        with pytest.raises(DomainError):
            PortfolioWeek(pd.Timestamp("2020-01-03"), ("A",), ("A",), 0.0, 0.0, 0.0)


class TestLedger:
    """Tests for BacktestLedger."""

    def test_cumulative_is_running_sum(self):
        """cumulative[t] = sum of net changes up to t."""
        ledger = BacktestLedger(weeks=tuple(
            portfolio_week(day, net)
            for day, net in zip(["2020-01-03", "2020-01-10", "2020-01-17"], [0.01, -0.02, 0.005])
        ))
        assert ledger.cumulative == pytest.approx([0.01, -0.01, -0.005])
        frame = ledger.to_frame()
        assert list(frame.columns) == LEDGER_COLUMNS
        assert frame["week"].tolist() == ["2020-01-03", "2020-01-10", "2020-01-17"]

    def test_weeks_strictly_increase(self):
        """Out-of-order weeks are rejected."""
        with pytest.raises(DomainError):
            BacktestLedger(weeks=(portfolio_week("2020-01-10", 0.0), portfolio_week("2020-01-03", 0.0)))

    def test_t_stat(self):
        """t statistic of the mean change; NaN for fewer than two weeks."""
        ledger = BacktestLedger(weeks=(portfolio_week("2020-01-03", 0.01), portfolio_week("2020-01-10", 0.03)))
        changes = np.array([0.01, 0.03])
        assert ledger.mean_change_t_stat() == pytest.approx(changes.mean() / (changes.std(ddof=1) / np.sqrt(2)))
        assert np.isnan(BacktestLedger().mean_change_t_stat())


@pytest.fixture(scope="module")
def world_and_inputs():
    world = small_world()
    return world, world_inputs(world)


class TestRefits:
    """Tests for refit_weeks, ledger_from_fits and the sweep."""

    def test_window_ends_before_the_week(self, world_and_inputs):
        """Each refit sees only dates strictly before its week."""
        _, inputs = world_and_inputs
        seen = []

        def refit(window_inputs):
            seen.append(window_inputs.securities.dates)
            return []

        weeks = inputs.securities.dates[60:63]
        refit_weeks(inputs, weeks, refit, window_weeks=52, min_window_weeks=52)
        for week, dates in zip(weeks, seen):
            assert len(dates) == 52
            assert dates[-1] < week
            assert dates[-1] == inputs.securities.dates[inputs.securities.dates.get_loc(week) - 1]

    def test_short_history_is_a_gap(self, world_and_inputs):
        """Weeks without enough history are recorded as gaps."""
        _, inputs = world_and_inputs
        fits = refit_weeks(inputs, inputs.securities.dates[10:12], ff5_alpha_refit, 52, 52)
        assert all(fit.is_gap for fit in fits)

    def test_failed_refit_is_a_gap(self, world_and_inputs):
        """A domain failure during a refit skips the week."""
        _, inputs = world_and_inputs

        def failing(window_inputs):
            raise InsufficientDataError("no usable securities")

        fits = refit_weeks(inputs, inputs.securities.dates[60:61], failing, 52, 52)
        ledger = ledger_from_fits(fits, inputs.securities)
        assert ledger.weeks == ()
        assert ledger.gaps[0].reason == "no usable securities"

    def test_sign_neutrality(self, world_and_inputs):
        """Negating every security return leaves the weekly net changes unchanged."""
        _, inputs = world_and_inputs
        flipped = StudyInputs(
            securities=inputs.securities.negate(), etfs=inputs.etfs, ff5=inputs.ff5,
            factor_meta=inputs.factor_meta, security_meta=inputs.security_meta,
        )
        weeks = inputs.securities.dates[60:75]
        base = run_backtest(inputs, inputs.securities, weeks, ff5_alpha_refit, 0.5, 0.5, 52, 52)
        mirror = run_backtest(flipped, flipped.securities, weeks, ff5_alpha_refit, 0.5, 0.5, 52, 52)
        assert len(base.weeks) == 15
        assert mirror.net_changes == pytest.approx(base.net_changes, abs=1e-12)
        for a, b in zip(base.weeks, mirror.weeks):
            assert a.long_members == b.short_members
            assert a.short_members == b.long_members

    def test_quantile_sweep(self, world_and_inputs):
        """One ledger per quantile from shared refits; smaller quantiles hold fewer names."""
        _, inputs = world_and_inputs
        fits = refit_weeks(inputs, inputs.securities.dates[60:65], ff5_alpha_refit, 52, 52)
        ledgers = quantile_sweep(fits, inputs.securities, (0.4, 0.1), sig_level=1.0)
        assert set(ledgers) == {0.4, 0.1}
        for wide, narrow in zip(ledgers[0.4].weeks, ledgers[0.1].weeks):
            assert len(narrow.long_members) <= len(wide.long_members)

    def test_week_without_realized_returns(self, world_and_inputs):
        """A fitted week missing from the realised panel becomes a gap."""
        _, inputs = world_and_inputs
        fit = WeekFit(week=pd.Timestamp("1999-01-01"), models=tuple(estimates({"A": 0.01})))
        ledger = ledger_from_fits([fit], inputs.securities)
        assert len(ledger.gaps) == 1

    def test_out_of_sample_weeks(self):
        """The first count dates on or after start."""
        dates = weekly_dates(10)
        selected = out_of_sample_weeks(dates, dates[3] - pd.Timedelta(days=2), 4)
        assert list(selected) == list(dates[3:7])
        assert len(out_of_sample_weeks(dates, dates[8], 5)) == 2

    def test_window_bounds(self, world_and_inputs):
        """The minimum window must not exceed the rolling window."""
        _, inputs = world_and_inputs
        with pytest.raises(DomainError):
            refit_weeks(inputs, [], ff5_alpha_refit, window_weeks=10, min_window_weeks=20)

    def test_pipeline_refit_frozen_and_recomputed(self, world_and_inputs):
        """The full estimation pipeline drives the ledger with a recomputed or a frozen universe."""
        _, inputs = world_and_inputs
        dates = inputs.securities.dates
        weeks = dates[60:63]
        settings = EstimationSettings()
        history = inputs.restrict(dates[8:60])
        frozen = reduce_factors(orthogonalize_universe(history.etfs, history.market), history.factor_meta, settings.pca_threshold)
        names = set(inputs.securities.names)
        for refit in (study_refit(settings), study_refit(settings, frozen)):
            ledger = run_backtest(inputs, inputs.securities, weeks, refit, 0.5, 0.5, 52, 52)
            assert len(ledger.weeks) + len(ledger.gaps) == 3
            for week in ledger.weeks:
                assert set(week.long_members) | set(week.short_members) <= names
                assert not set(week.long_members) & set(week.short_members)
                assert week.net_change == week.long_return - week.short_return


@pytest.mark.slow
class TestNullWorlds:
    """Statistical behaviour over many simulated worlds."""

    def test_zero_alpha_ledgers_fluctuate_around_zero(self):
        """In zero-alpha worlds the 52-week mean net change is insignificant in at least 90% of worlds."""
        insignificant = 0
        for seed in range(100):
            world = small_world(seed=seed, securities=20, weeks=104, alpha=0.0)
            inputs = world_inputs(world)
            ledger = run_backtest(
                inputs, inputs.securities, inputs.securities.dates[52:104], ff5_alpha_refit,
                quantile=0.5, sig_level=0.2, window_weeks=52, min_window_weeks=52,
            )
            assert len(ledger.weeks) == 52
            for week in ledger.weeks:
                assert not set(week.long_members) & set(week.short_members)
                assert week.net_change == week.long_return - week.short_return
            if abs(ledger.mean_change_t_stat()) < 2:
                insignificant += 1
        assert insignificant >= 90

    def test_pipeline_refits_in_zero_alpha_worlds(self):
        """Through the full estimation pipeline, zero-alpha ledgers stay insignificant in most worlds."""
        insignificant = 0
        for seed in range(10):
            world = small_world(seed=seed, securities=12, weeks=72, alpha=0.0)
            inputs = world_inputs(world)
            ledger = run_backtest(
                inputs, inputs.securities, inputs.securities.dates[52:72], study_refit(EstimationSettings()),
                quantile=0.5, sig_level=0.2, window_weeks=52, min_window_weeks=52,
            )
            assert len(ledger.weeks) + len(ledger.gaps) == 20
            for week in ledger.weeks:
                assert not set(week.long_members) & set(week.short_members)
                assert week.net_change == week.long_return - week.short_return
            if not abs(ledger.mean_change_t_stat()) >= 2:
                insignificant += 1
        assert insignificant >= 7
