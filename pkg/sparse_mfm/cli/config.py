"""
Run configuration.

A flat ``key = value`` file (blank lines and ``#`` comments allowed) is read
first, then same-named command-line flags override it. Values are coerced to
the field types declared on ``RunConfig``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, get_type_hints

import pandas as pd

from ..domain.errors import ConfigError, format_errors
from ..domain.pipeline import EstimationSettings
from ..domain.simulate import SimulationConfig

TRUE_WORDS = {"true", "yes", "on", "1"}
FALSE_WORDS = {"false", "no", "off", "0"}
UNITS = ("decimal", "percent")


@dataclass
class RunConfig:
    # inputs
    securities: Optional[str] = None
    etfs: Optional[str] = None
    ff5: Optional[str] = None
    risk_free: Optional[str] = None
    security_meta: Optional[str] = None
    factor_meta: Optional[str] = None
    returns_units: str = "decimal"
    ff5_units: str = "percent"
    # estimation window
    start: Optional[str] = None
    end: Optional[str] = None
    min_coverage: float = 2 / 3
    # procedural choices
    s_max: int = 20
    corr_cap: float = 0.90
    pca_threshold: float = 0.80
    sig_level: float = 0.05
    grid_size: int = 100
    grid_floor: float = 1e-3
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 100_000
    min_obs: int = 30
    workers: int = 1
    # backtest
    quantile: float = 0.5
    backtest_start: Optional[str] = None
    backtest_weeks: int = 52
    window_weeks: int = 156
    min_window_weeks: int = 52
    freeze_universe: bool = False
    backtest_quantiles: Optional[str] = None
    # output and simulation
    output_dir: str = "output"
    seed: int = 1
    sim_securities: int = 200
    sim_weeks: int = 156
    sim_categories: int = 17
    sim_factors_per_category: int = 8
    sim_blocks: int = 5
    sim_sparsity: int = 4
    sim_noise: float = 0.02
    sim_alpha: float = 0.0
    sim_signal: float = 0.5
    sim_null_world: bool = False

    def validate(self) -> List[str]:
        errors = []
        start = _parse_date("start", self.start, errors)
        end = _parse_date("end", self.end, errors)
        _parse_date("backtest_start", self.backtest_start, errors)
        if start is not None and end is not None and not start < end:
            errors.append(f"start ({self.start}) must be before end ({self.end})")

        for name in ("min_coverage", "corr_cap", "pca_threshold", "sig_level", "quantile"):
            value = getattr(self, name)
            if not (0 < value <= 1):
                errors.append(f"{name} must be in (0, 1], got {value}")
        if not (0 < self.grid_floor < 1):
            errors.append(f"grid_floor must be in (0, 1), got {self.grid_floor}")
        for name in ("s_max", "grid_size", "workers", "lasso_max_iter", "min_obs", "backtest_weeks"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lasso_tol <= 0:
            errors.append(f"lasso_tol must be positive, got {self.lasso_tol}")
        if not (1 <= self.min_window_weeks <= self.window_weeks):
            errors.append(
                f"need 1 <= min_window_weeks <= window_weeks, got {self.min_window_weeks} and {self.window_weeks}"
            )
        for name in ("returns_units", "ff5_units"):
            if getattr(self, name) not in UNITS:
                errors.append(f"{name} must be one of {UNITS}, got {getattr(self, name)!r}")
        try:
            for q in self.quantiles:
                if not (0 < q <= 1):
                    errors.append(f"backtest_quantiles entries must be in (0, 1], got {q}")
        except ValueError:
            errors.append(f"backtest_quantiles must be a comma separated list of numbers, got {self.backtest_quantiles!r}")
        return errors

    def check(self) -> "RunConfig":
        errors = self.validate()
        if errors:
            raise ConfigError(format_errors("Invalid configuration", errors))
        return self

    def require(self, *names: str) -> None:
        missing = [name for name in names if not getattr(self, name)]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")

    @property
    def quantiles(self) -> Tuple[float, ...]:
        if not self.backtest_quantiles:
            return ()
        return tuple(float(part) for part in self.backtest_quantiles.split(",") if part.strip())

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def estimation_settings(self) -> EstimationSettings:
        return EstimationSettings(
            s_max=self.s_max,
            corr_cap=self.corr_cap,
            pca_threshold=self.pca_threshold,
            sig_level=self.sig_level,
            grid_size=self.grid_size,
            grid_floor=self.grid_floor,
            lasso_tol=self.lasso_tol,
            lasso_max_iter=self.lasso_max_iter,
            min_obs=self.min_obs,
            workers=self.workers,
        )

    def simulation_config(self) -> SimulationConfig:
        return SimulationConfig(
            seed=self.seed,
            securities=self.sim_securities,
            weeks=self.sim_weeks,
            categories=self.sim_categories,
            factors_per_category=self.sim_factors_per_category,
            blocks=self.sim_blocks,
            sparsity=self.sim_sparsity,
            noise=self.sim_noise,
            alpha=self.sim_alpha,
            signal=self.sim_signal,
            null_world=self.sim_null_world,
        )

    def echo(self) -> Dict[str, object]:
        return dataclasses.asdict(self)

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_sources(cls, path: Optional[str] = None, overrides: Optional[Mapping[str, Optional[str]]] = None) -> "RunConfig":
        raw: Dict[str, str] = read_config_file(path) if path else {}
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(raw).check()

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> "RunConfig":
        hints = get_type_hints(cls)
        known = set(cls.keys())
        unknown = sorted(set(raw) - known)
        errors = [f"unknown key {key!r}" for key in unknown]
        values = {}
        for key, text in raw.items():
            if key not in known:
                continue
            try:
                values[key] = _coerce(str(text), hints[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
        if errors:
            raise ConfigError(format_errors("Invalid configuration", errors))
        return cls(**values)


def read_config_file(path) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: Dict[str, str] = {}
    errors = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {number}: expected 'key = value', got {line.strip()!r}")
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in values:
            errors.append(f"line {number}: duplicate key {key!r}")
        values[key] = value
    if errors:
        raise ConfigError(format_errors(f"Invalid config file {path}", errors))
    return values


def _coerce(text: str, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        try:
            return int(text)
        except ValueError:
            raise ValueError(f"expected an integer, got {text!r}") from None
    if kind is float:
        try:
            return float(Fraction(text))
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"expected a number, got {text!r}") from None
    # Optional[str] and str
    return (text or None) if kind is not str else text


def _parse_date(name: str, value: Optional[str], errors: List[str]):
    if value is None:
        return None
    try:
        return pd.Timestamp(value)
    except (ValueError, TypeError):
        errors.append(f"{name}: invalid date {value!r}")
        return None
