"""
Weekly return panels: ingestion, alignment, coverage filtering, excess returns.

A panel is a date-indexed ``pandas.DataFrame`` wrapped in ``ReturnsPanel``;
missing observations are ``NaN`` and the boolean ``mask`` is derived from them.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..logging import get_logger
from .errors import AlignmentError, DateParseError, DomainError, PanelSchemaError
from .taxonomy import FF5_IDS, EtfTaxonomy, default_taxonomy

log = get_logger(__name__)

PathLike = Union[str, Path]

FF5_HEADER = ["date", *FF5_IDS, "rf"]


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """
    Weekly simple returns (decimals) for a set of securities or factors.

    ``frame`` is indexed by week-ending date with one column per ticker;
    ``NaN`` marks an unobserved cell.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise PanelSchemaError(
                "Invalid returns panel:\n" + "\n".join(f"  - {err}" for err in errors)
            )

    def validate(self) -> List[str]:
        errors = []
        index = self.frame.index
        if not isinstance(index, pd.DatetimeIndex):
            errors.append(f"index must be a DatetimeIndex, got {type(index).__name__}")
        elif len(index) > 1 and not (index[1:] > index[:-1]).all():
            errors.append("dates must be strictly increasing")

        columns = list(self.frame.columns)
        if len(columns) != len(set(columns)):
            duplicates = sorted({c for c in columns if columns.count(c) > 1})
            errors.append(f"duplicate column names: {duplicates}")

        values = self.frame.to_numpy(dtype=float, na_value=np.nan)
        if np.isinf(values).any():
            errors.append("values must be finite wherever observed")
        return errors

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def names(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float, na_value=np.nan)

    @property
    def mask(self) -> np.ndarray:
        return self.frame.notna().to_numpy()

    @property
    def n_weeks(self) -> int:
        return len(self.frame.index)

    def column(self, name: str) -> pd.Series:
        return self.frame[name]

    def select(self, names: Sequence[str]) -> "ReturnsPanel":
        return ReturnsPanel(self.frame.loc[:, list(names)].copy())

    def drop(self, names: Iterable[str]) -> "ReturnsPanel":
        return ReturnsPanel(self.frame.drop(columns=list(names)))

    def restrict(self, dates: pd.DatetimeIndex) -> "ReturnsPanel":
        return ReturnsPanel(self.frame.loc[dates].copy())

    def negate(self) -> "ReturnsPanel":
        return ReturnsPanel(-self.frame)


@dataclass(frozen=True, eq=False)
class RiskFreeSeries:
    """Weekly risk-free return, fully observed over its dates."""

    series: pd.Series

    def __post_init__(self):
        index = self.series.index
        if not isinstance(index, pd.DatetimeIndex):
            raise PanelSchemaError("risk-free index must be a DatetimeIndex")
        if len(index) > 1 and not (index[1:] > index[:-1]).all():
            raise PanelSchemaError("risk-free dates must be strictly increasing")
        if not np.isfinite(self.series.to_numpy(dtype=float)).all():
            raise PanelSchemaError("risk-free series must be fully observed and finite")

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.series.index

    @property
    def values(self) -> np.ndarray:
        return self.series.to_numpy(dtype=float)

    def __neg__(self) -> "RiskFreeSeries":
        return RiskFreeSeries(-self.series)

    def restrict(self, dates: pd.DatetimeIndex) -> "RiskFreeSeries":
        missing = dates.difference(self.series.index)
        if len(missing):
            raise AlignmentError("risk-free series does not cover the panel", missing)
        return RiskFreeSeries(self.series.loc[dates].copy())


@dataclass(frozen=True)
class SecurityMeta:
    """Security classification by the first two digits of its 4-digit SIC code."""

    ticker: str
    sic_code: int

    def __post_init__(self):
        if not self.ticker:
            raise PanelSchemaError("security ticker must be a non-empty string")
        if not (0 <= self.sic_code <= 9999):
            raise PanelSchemaError(
                f"{self.ticker}: sic_code must be in [0, 9999], got {self.sic_code}"
            )

    @property
    def class_id(self) -> str:
        return f"{self.sic_code:04d}"[:2]


@dataclass(frozen=True)
class FactorMeta:
    """ETF factor classification: one of the 73 categories within one of the 10 classes."""

    ticker: str
    category: str
    factor_class: str

    def validate(self, taxonomy: Optional[EtfTaxonomy] = None) -> List[str]:
        taxonomy = taxonomy or default_taxonomy()
        errors = []
        if self.factor_class not in taxonomy.classes:
            errors.append(f"{self.ticker}: unknown class {self.factor_class!r}")
        elif self.category not in taxonomy.category_class:
            errors.append(f"{self.ticker}: unknown category {self.category!r}")
        elif taxonomy.class_of(self.category) != self.factor_class:
            errors.append(
                f"{self.ticker}: category {self.category!r} belongs to "
                f"{taxonomy.class_of(self.category)!r}, not {self.factor_class!r}"
            )
        return errors


def _read_header(path: Path) -> List[str]:
    header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False)
    return [str(h).strip() for h in header.iloc[0].tolist()]


def _parse_dates(raw: pd.Series, path: Path) -> pd.DatetimeIndex:
    parsed = pd.to_datetime(raw, format="ISO8601", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: 1-based line numbers and the header line
        raise DateParseError(str(path), position + 2, str(raw.iloc[position]))
    return pd.DatetimeIndex(parsed)


def load_panel(path: PathLike, date_column: str = "date", units: str = "decimal") -> ReturnsPanel:
    """
    Load a wide returns CSV: ``date,<ticker1>,<ticker2>,...``.

    Empty cells become missing observations; rows are sorted by date.
    ``units="percent"`` divides every value by 100.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")

    header = _read_header(path)
    if not header or header[0] != date_column:
        raise PanelSchemaError(f"{path}: first column must be {date_column!r}, got {header[:1]}")
    tickers = header[1:]
    if len(tickers) != len(set(tickers)):
        duplicates = sorted({t for t in tickers if tickers.count(t) > 1})
        raise PanelSchemaError(f"{path}: duplicate ticker columns {duplicates}")

    raw = pd.read_csv(path, dtype={date_column: str}, skipinitialspace=True)
    raw.columns = header
    dates = _parse_dates(raw[date_column], path)

    body = raw.drop(columns=[date_column])
    for name in body.columns:
        if body[name].dtype == object:
            try:
                body[name] = pd.to_numeric(body[name])
            except (TypeError, ValueError):
                raise PanelSchemaError(f"{path}: column {name!r} contains non-numeric values") from None
    body = body.astype(float)
    body.index = dates
    body.index.name = date_column

    if body.index.duplicated().any():
        dup = body.index[body.index.duplicated()][0]
        raise PanelSchemaError(f"{path}: duplicate date {dup.date()}")
    if not body.index.is_monotonic_increasing:
        log.debug(f"{path}: rows out of date order, sorting")
        body = body.sort_index()

    if units == "percent":
        body = body / 100.0
    elif units != "decimal":
        raise PanelSchemaError(f"units must be 'decimal' or 'percent', got {units!r}")

    panel = ReturnsPanel(body)
    log.debug(f"Loaded {path.name}: {panel.n_weeks} weeks x {len(tickers)} columns")
    return panel


def load_risk_free(path: PathLike, units: str = "decimal") -> RiskFreeSeries:
    panel = load_panel(path, units=units)
    if panel.names != ["rf"]:
        raise PanelSchemaError(f"{path}: expected header 'date,rf', got {['date', *panel.names]}")
    return RiskFreeSeries(panel.column("rf"))


def load_ff5(path: PathLike, units: str = "percent") -> Tuple[ReturnsPanel, RiskFreeSeries]:
    """Load the FF5 file; returns the five factor columns and its ``rf`` column."""
    panel = load_panel(path, units=units)
    if ["date", *panel.names] != FF5_HEADER:
        raise PanelSchemaError(f"{path}: expected header {','.join(FF5_HEADER)}")
    factors = panel.select(list(FF5_IDS))
    return factors, RiskFreeSeries(panel.column("rf"))


def load_security_meta(path: PathLike) -> Dict[str, SecurityMeta]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != ["ticker", "sic"]:
        raise PanelSchemaError(f"{path}: expected header 'ticker,sic'")
    meta: Dict[str, SecurityMeta] = {}
    for row_number, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            sic = int(row.sic)
        except ValueError:
            raise PanelSchemaError(f"{path}: row {row_number}: sic {row.sic!r} is not an integer") from None
        if row.ticker in meta:
            raise PanelSchemaError(f"{path}: row {row_number}: duplicate ticker {row.ticker!r}")
        meta[row.ticker] = SecurityMeta(ticker=row.ticker, sic_code=sic)
    return meta


def load_factor_meta(path: PathLike, taxonomy: Optional[EtfTaxonomy] = None) -> Dict[str, FactorMeta]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != ["ticker", "category", "class"]:
        raise PanelSchemaError(f"{path}: expected header 'ticker,category,class'")
    meta: Dict[str, FactorMeta] = {}
    errors: List[str] = []
    for ticker, category, factor_class in zip(frame["ticker"], frame["category"], frame["class"]):
        entry = FactorMeta(ticker=ticker, category=category, factor_class=factor_class)
        errors.extend(entry.validate(taxonomy))
        if entry.ticker in meta:
            errors.append(f"{entry.ticker}: listed twice")
        meta[entry.ticker] = entry
    if errors:
        raise PanelSchemaError(f"Invalid factor metadata in {path}:\n" + "\n".join(f"  - {e}" for e in errors))
    return meta


def filter_coverage(panel: ReturnsPanel, min_frac: float = 2 / 3) -> ReturnsPanel:
    """Keep columns observed in strictly more than ``min_frac`` of the weeks."""
    if not (0 < min_frac <= 1):
        raise DomainError(f"min_frac must be in (0, 1], got {min_frac}")
    total = panel.n_weeks
    if total == 0:
        return panel
    # Exact rational comparison so that 100/150 is not "more than" 2/3.
    frac = Fraction(min_frac).limit_denominator(10**6)
    counts = panel.frame.notna().sum(axis=0)
    keep = [name for name in panel.names if int(counts[name]) * frac.denominator > frac.numerator * total]
    dropped = len(panel.names) - len(keep)
    if dropped:
        log.info(f"Coverage filter dropped {dropped} of {len(panel.names)} columns (min_frac={min_frac:.4f})")
    return panel.select(keep)


def excess_returns(panel: ReturnsPanel, rf: RiskFreeSeries) -> ReturnsPanel:
    """Subtract the weekly risk-free rate from every observed cell."""
    if not panel.dates.equals(rf.dates):
        missing = panel.dates.symmetric_difference(rf.dates)
        raise AlignmentError("panel and risk-free date grids differ", missing)
    return ReturnsPanel(panel.frame.sub(rf.series, axis=0))


def align(panels: Sequence[ReturnsPanel]) -> List[ReturnsPanel]:
    """Restrict every panel to the intersection of their date grids."""
    if not panels:
        raise AlignmentError("align requires at least one panel")
    common = panels[0].dates
    for panel in panels[1:]:
        common = common.intersection(panel.dates)
    if len(common) == 0:
        raise AlignmentError("date grids have an empty intersection")
    common = common.sort_values()
    return [panel if panel.dates.equals(common) else panel.restrict(common) for panel in panels]


def window(panel: ReturnsPanel, start=None, end=None) -> ReturnsPanel:
    """Rows with ``start <= date <= end`` (either bound optional)."""
    frame = panel.frame
    if start is not None:
        frame = frame.loc[frame.index >= pd.Timestamp(start)]
    if end is not None:
        frame = frame.loc[frame.index <= pd.Timestamp(end)]
    return ReturnsPanel(frame.copy())
