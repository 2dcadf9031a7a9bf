"""
Synthetic weekly worlds with a known ground truth.

ETF excess returns load on the market plus one of ``blocks`` latent series
shared across categories (so within-block correlation after removing the
market is ``block_corr``). Every category holds two blocks. Security excess
returns are alpha + FF5 exposures + a sparse set of planted ETF loadings +
Gaussian noise. All randomness comes from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from ..logging import get_logger
from .errors import ConfigError, format_errors
from .panel import FactorMeta, ReturnsPanel, RiskFreeSeries, SecurityMeta
from .taxonomy import FF5_IDS, default_taxonomy

log = get_logger(__name__)

SIC_GROUP_POOL = ("13", "20", "28", "35", "36", "48", "60", "73")
FF5_SCALES = (0.02, 0.01, 0.01, 0.008, 0.008)
FLOAT_FORMAT = "%.10f"


@dataclass(frozen=True)
class SimulationConfig:
    seed: int = 1
    securities: int = 200
    weeks: int = 156
    categories: int = 17
    factors_per_category: int = 8
    blocks: int = 5
    block_corr: float = 0.95
    sparsity: int = 4
    noise: float = 0.02
    alpha: float = 0.0
    signal: float = 0.5
    null_world: bool = False
    missing_frac: float = 0.0
    rf: float = 0.0005
    start: str = "2014-01-03"

    def validate(self) -> List[str]:
        errors = []
        if self.securities < 1:
            errors.append(f"securities must be >= 1, got {self.securities}")
        if self.weeks < 10:
            errors.append(f"weeks must be >= 10, got {self.weeks}")
        if not (1 <= self.categories <= len(default_taxonomy().categories)):
            errors.append(f"categories must be in [1, {len(default_taxonomy().categories)}], got {self.categories}")
        if self.factors_per_category < 1:
            errors.append(f"factors_per_category must be >= 1, got {self.factors_per_category}")
        if self.blocks < 1:
            errors.append(f"blocks must be >= 1, got {self.blocks}")
        if not (0 < self.block_corr < 1):
            errors.append(f"block_corr must be in (0, 1), got {self.block_corr}")
        if not (0 <= self.sparsity <= self.categories * self.factors_per_category):
            errors.append(f"sparsity must be between 0 and the number of ETFs, got {self.sparsity}")
        if self.noise <= 0:
            errors.append(f"noise must be positive, got {self.noise}")
        if not (0 <= self.missing_frac < 1):
            errors.append(f"missing_frac must be in [0, 1), got {self.missing_frac}")
        return errors

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigError(format_errors("Invalid simulation config", errors))


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    config: SimulationConfig
    securities: ReturnsPanel
    etfs: ReturnsPanel
    ff5: ReturnsPanel
    rf: RiskFreeSeries
    security_meta: Dict[str, SecurityMeta]
    factor_meta: Dict[str, FactorMeta]
    ground_truth: Dict = field(repr=False, default_factory=dict)

    @property
    def planted(self) -> Dict[str, Tuple[str, ...]]:
        return {t: tuple(g["etf_betas"]) for t, g in self.ground_truth["securities"].items()}

    def mean_support(self) -> float:
        sizes = [len(v) for v in self.planted.values()]
        return float(np.mean(sizes)) if sizes else 0.0


def _etf_layout(config: SimulationConfig) -> List[Tuple[str, str, str, int]]:
    """(ticker, category, class, block) for every synthetic ETF."""
    taxonomy = default_taxonomy()
    layout = []
    for c, category in enumerate(taxonomy.categories[: config.categories]):
        blocks = (c % config.blocks, (c + 1) % config.blocks)
        for j in range(config.factors_per_category):
            ticker = f"ETF{c * config.factors_per_category + j:03d}"
            layout.append((ticker, category, taxonomy.class_of(category), blocks[j % 2]))
    return layout


def simulate_world(config: SimulationConfig = SimulationConfig()) -> SyntheticWorld:
    rng = np.random.default_rng(config.seed)
    n = config.weeks
    dates = pd.date_range(pd.Timestamp(config.start), periods=n, freq="W-FRI", name="date")

    ff5 = np.column_stack([rng.normal(0.001, scale, n) for scale in FF5_SCALES])
    market = ff5[:, 0]

    layout = _etf_layout(config)
    latent = rng.normal(0.0, 0.02, (n, config.blocks))
    idio_sd = 0.02 * np.sqrt((1 - config.block_corr) / config.block_corr)
    etf_cols = {}
    for ticker, _, _, block in layout:
        market_beta = rng.uniform(0.5, 1.5)
        etf_cols[ticker] = market_beta * market + latent[:, block] + rng.normal(0.0, idio_sd, n)
    etf_excess = pd.DataFrame(etf_cols, index=dates)

    tickers = [f"SEC{i:04d}" for i in range(config.securities)]
    etf_names = list(etf_excess.columns)
    sec_cols = {}
    truth: Dict[str, Dict] = {}
    for ticker in tickers:
        ff5_betas = np.concatenate([[rng.uniform(0.5, 1.5)], rng.normal(0.0, 0.3, 4)])
        y = config.alpha + ff5 @ ff5_betas + rng.normal(0.0, config.noise, n)
        planted: Dict[str, float] = {}
        if not config.null_world and config.sparsity:
            chosen = rng.choice(len(etf_names), size=config.sparsity, replace=False)
            for j in sorted(chosen):
                beta = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5) * config.signal)
                planted[etf_names[j]] = beta
                y = y + beta * etf_excess[etf_names[j]].to_numpy()
        sec_cols[ticker] = y
        truth[ticker] = {
            "alpha": config.alpha,
            "sigma": config.noise,
            "ff5_betas": dict(zip(FF5_IDS, map(float, ff5_betas))),
            "etf_betas": planted,
        }

    sec_excess = pd.DataFrame(sec_cols, index=dates)
    if config.missing_frac > 0:
        holes = rng.random(sec_excess.shape) < config.missing_frac
        sec_excess = sec_excess.mask(holes)

    rf = pd.Series(config.rf, index=dates, name="rf")
    security_meta = {
        t: SecurityMeta(ticker=t, sic_code=int(rng.choice(SIC_GROUP_POOL)) * 100 + int(rng.integers(0, 100)))
        for t in tickers
    }
    factor_meta = {t: FactorMeta(ticker=t, category=cat, factor_class=cls) for t, cat, cls, _ in layout}

    ground_truth = {
        "config": asdict(config),
        "securities": truth,
        "blocks": {t: block for t, _, _, block in layout},
    }
    log.info(
        f"Simulated {config.securities} securities x {n} weeks with {len(layout)} ETFs "
        f"(seed={config.seed}, null_world={config.null_world})"
    )
    return SyntheticWorld(
        config=config,
        securities=ReturnsPanel(sec_excess.add(rf, axis=0)),
        etfs=ReturnsPanel(etf_excess.add(rf, axis=0)),
        ff5=ReturnsPanel(pd.DataFrame(ff5, index=dates, columns=list(FF5_IDS))),
        rf=RiskFreeSeries(rf),
        security_meta=security_meta,
        factor_meta=factor_meta,
        ground_truth=ground_truth,
    )


def write_world(world: SyntheticWorld, directory) -> Dict[str, Path]:
    """
    Write the world as input files: securities.csv, etfs.csv (decimal),
    ff5.csv (percent, with rf), risk_free.csv, security_meta.csv,
    factor_meta.csv and ground_truth.json.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        name: directory / f"{name}.csv"
        for name in ("securities", "etfs", "ff5", "risk_free", "security_meta", "factor_meta")
    }
    paths["ground_truth"] = directory / "ground_truth.json"

    def dated(frame: pd.DataFrame) -> pd.DataFrame:
        out = frame.copy()
        out.index = out.index.strftime("%Y-%m-%d")
        out.index.name = "date"
        return out

    dated(world.securities.frame).to_csv(paths["securities"], float_format=FLOAT_FORMAT, lineterminator="\n")
    dated(world.etfs.frame).to_csv(paths["etfs"], float_format=FLOAT_FORMAT, lineterminator="\n")
    ff5 = world.ff5.frame.assign(rf=world.rf.series) * 100.0
    dated(ff5).to_csv(paths["ff5"], float_format=FLOAT_FORMAT, lineterminator="\n")
    dated(world.rf.series.to_frame("rf")).to_csv(paths["risk_free"], float_format=FLOAT_FORMAT, lineterminator="\n")

    pd.DataFrame(
        [(m.ticker, f"{m.sic_code:04d}") for m in world.security_meta.values()], columns=["ticker", "sic"]
    ).to_csv(paths["security_meta"], index=False, lineterminator="\n")
    pd.DataFrame(
        [(m.ticker, m.category, m.factor_class) for m in world.factor_meta.values()],
        columns=["ticker", "category", "class"],
    ).to_csv(paths["factor_meta"], index=False, lineterminator="\n")

    paths["ground_truth"].write_text(json.dumps(world.ground_truth, indent=2, sort_keys=True) + "\n")
    log.info(f"Wrote synthetic world to {directory}")
    return paths
