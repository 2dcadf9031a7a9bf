"""
Subcommand implementations. Each takes a checked ``RunConfig``, writes its
artifacts under ``output_dir`` and returns the process exit code.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import pandas as pd

from ..domain.backtest import (
    BacktestLedger,
    out_of_sample_weeks,
    ledger_from_fits,
    quantile_sweep,
    refit_weeks,
    study_refit,
)
from ..domain.errors import ConfigError
from ..domain.inference import adj_r2_comparison, gof_study, intercept_study, significance_shares
from ..domain.panel import ReturnsPanel, load_factor_meta, load_ff5, load_panel, load_risk_free, load_security_meta
from ..domain.pipeline import (
    StudyInputs,
    build_inputs,
    factor_level_counts,
    orthogonalize_universe,
    reduce_factors,
    run_study,
    support_summary,
)
from ..domain.simulate import simulate_world, write_world
from ..domain.taxonomy import default_sic_groups
from ..logging import get_logger
from .config import RunConfig

log = get_logger(__name__)

FLOAT_FORMAT = "%.10g"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, frame: pd.DataFrame, index: bool = True) -> None:
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")


def _output_dir(config: RunConfig) -> Path:
    out = config.output_path
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_study_data(config: RunConfig, start=None, end=None) -> Tuple[StudyInputs, ReturnsPanel]:
    """Read every input file and build the excess-return study inputs plus the raw security panel."""
    config.require("securities", "etfs", "ff5", "security_meta", "factor_meta")
    securities = load_panel(config.securities, units=config.returns_units)
    etfs = load_panel(config.etfs, units=config.returns_units)
    ff5, ff5_rf = load_ff5(config.ff5, units=config.ff5_units)
    rf = load_risk_free(config.risk_free, units=config.returns_units) if config.risk_free else ff5_rf
    factor_meta = load_factor_meta(config.factor_meta)
    security_meta = load_security_meta(config.security_meta)
    inputs = build_inputs(
        securities,
        etfs,
        ff5,
        rf,
        factor_meta=factor_meta,
        security_meta=security_meta,
        start=config.start if start is None else start,
        end=config.end if end is None else end,
        min_coverage=config.min_coverage,
    )
    return inputs, securities


def cmd_reduce(config: RunConfig) -> int:
    inputs, _ = load_study_data(config)
    x_tilde = orthogonalize_universe(inputs.etfs, inputs.market)
    reduced = reduce_factors(x_tilde, inputs.factor_meta, config.pca_threshold)

    out = _output_dir(config)
    _write_json(out / "reduced_universe.json", {"config": config.echo(), "reduced": reduced.to_dict()})
    _write_json(
        out / "dendrograms.json",
        {"config": config.echo(), "dendrograms": {k: d.to_dict() for k, d in reduced.dendrograms.items()}},
    )
    log.info(f"Reduced universe written to {out} (p2 = {reduced.p2})")
    return 0


def cmd_fit(config: RunConfig) -> int:
    inputs, _ = load_study_data(config)
    result = run_study(inputs, config.estimation_settings())
    out = _output_dir(config)

    _write_json(
        out / "models.json",
        {
            "config": config.echo(),
            "reduced": result.reduced.to_dict(),
            "models": [m.to_dict() for m in result.models],
            "excluded": result.excluded,
            "support_summary": support_summary(result.models),
        },
    )
    counts = factor_level_counts(result.models)
    _write_csv(out / "factor_counts.csv", counts.rename_axis("factor").to_frame())
    if result.matrices is not None:
        _write_csv(out / "significance_counts.csv", result.matrices.counts)
        sic_groups = default_sic_groups()
        _write_csv(out / "significance_percent.csv", result.matrices.percent_table(sic_groups))
        _write_json(
            out / "significance.json",
            {"config": config.echo(), **result.matrices.to_dict(), "group_titles": result.matrices.group_titles(sic_groups)},
        )
    log.info(f"Fitted {len(result.models)} securities, p3 = {len(counts)}; outputs in {out}")
    return 0


def cmd_test(config: RunConfig) -> int:
    inputs, _ = load_study_data(config)
    result = run_study(inputs, config.estimation_settings(), aggregate=False)
    intercepts = intercept_study(result.models)
    f_table = gof_study(result.models)
    out = _output_dir(config)

    _write_csv(out / "intercept_study.csv", intercepts.table())
    _write_csv(out / "f_study.csv", f_table.bins())
    _write_json(
        out / "intercept_study.json",
        {
            "config": config.echo(),
            **intercepts.to_dict(),
            "shares": {
                "mfm": significance_shares(intercepts.mfm),
                "ff5": significance_shares(intercepts.ff5),
            },
        },
    )
    _write_json(
        out / "f_study.json",
        {
            "config": config.echo(),
            **f_table.to_dict(),
            "shares": significance_shares(f_table),
            "adj_r2": adj_r2_comparison(result.models),
        },
    )
    log.info(f"Intercept and F studies over {len(result.models)} securities written to {out}")
    return 0


def _ledger_summary(ledger: BacktestLedger) -> Dict[str, object]:
    t_stat = ledger.mean_change_t_stat()
    return {
        "weeks": len(ledger.weeks),
        "gaps": [{"week": g.week.strftime("%Y-%m-%d"), "reason": g.reason} for g in ledger.gaps],
        "cumulative": float(ledger.cumulative[-1]) if ledger.weeks else 0.0,
        "mean_change_t_stat": t_stat if t_stat == t_stat and abs(t_stat) != float("inf") else None,
    }


def cmd_backtest(config: RunConfig) -> int:
    inputs, securities = load_study_data(config)
    dates = inputs.securities.dates
    if config.backtest_start is not None:
        start = config.backtest_start
    elif len(dates) > config.window_weeks:
        start = dates[config.window_weeks]
    else:
        raise ConfigError(
            f"no out-of-sample weeks: {len(dates)} weeks of data and window_weeks = {config.window_weeks}"
        )
    weeks = out_of_sample_weeks(dates, start, config.backtest_weeks)
    if len(weeks) == 0:
        raise ConfigError(f"no out-of-sample weeks on or after {pd.Timestamp(start).date()}; data ends {dates[-1].date()}")

    settings = config.estimation_settings()
    frozen = None
    if config.freeze_universe:
        first = int(dates.searchsorted(weeks[0]))
        history = inputs.restrict(dates[max(0, first - config.window_weeks): first])
        frozen = reduce_factors(orthogonalize_universe(history.etfs, history.market), history.factor_meta, settings.pca_threshold)
        log.info(f"Backtest uses a frozen universe with p2 = {frozen.p2}")

    fits = refit_weeks(inputs, weeks, study_refit(settings, frozen), config.window_weeks, config.min_window_weeks)
    ledger = ledger_from_fits(fits, securities, config.quantile, config.sig_level)

    out = _output_dir(config)
    _write_csv(out / "ledger.csv", ledger.to_frame(), index=False)
    summary = {"config": config.echo(), "quantile": config.quantile, **_ledger_summary(ledger)}
    sweep = quantile_sweep(fits, securities, config.quantiles, config.sig_level) if config.quantiles else {}
    for q, swept in sweep.items():
        _write_csv(out / f"ledger_q{q:g}.csv", swept.to_frame(), index=False)
    summary["sweep"] = {f"{q:g}": _ledger_summary(swept) for q, swept in sweep.items()}
    _write_json(out / "backtest_summary.json", summary)
    log.info(f"Backtest ledger with {len(ledger.weeks)} weeks written to {out}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    world = simulate_world(config.simulation_config())
    out = _output_dir(config)
    write_world(world, out)
    return 0


COMMANDS = {
    "reduce": cmd_reduce,
    "fit": cmd_fit,
    "test": cmd_test,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
}
