"""
Cross-sectional hypothesis-testing studies.

Each study collects one p-value per security, adjusts them with the
Benjamini-Hochberg step-up procedure and its Yekutieli variant (constant
c(m) = 1 + 1/2 + ... + 1/m), and bins them over fixed value ranges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ..logging import get_logger
from .errors import DomainError, EmptyStudyError

log = get_logger(__name__)

INTERCEPT_EDGES: Tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
F_TEST_EDGES: Tuple[float, ...] = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.10, 0.20, 1.00)


def _check_p(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise DomainError("p-values must lie in [0, 1]")
    return p


def _step_up(p: np.ndarray, c: float) -> np.ndarray:
    m = len(p)
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    ranked = c * m * p[order] / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.clip(q_sorted, 0.0, 1.0)
    return q


def bh_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg q-values, returned in input order."""
    return _step_up(_check_p(p), 1.0)


def bhy_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg-Yekutieli q-values (BH inflated by c(m) = sum 1/i)."""
    p = _check_p(p)
    c = float(np.sum(1.0 / np.arange(1, len(p) + 1))) if len(p) else 1.0
    return _step_up(p, c)


def bin_percentages(values, edges: Sequence[float]) -> pd.DataFrame:
    """
    Count and percentage of ``values`` per ``[lo, hi)`` range; the last range is closed.

    Rows are labelled ``"lo-hi"``.
    """
    edges = np.asarray(edges, dtype=float)
    if len(edges) < 2 or not np.all(np.diff(edges) > 0):
        raise DomainError("bin edges must be strictly increasing with at least two entries")
    values = np.asarray(values, dtype=float).ravel()
    if ((values < edges[0]) | (values > edges[-1])).any():
        raise DomainError(f"values must lie in [{edges[0]}, {edges[-1]}]")

    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1)
    total = counts.sum()
    percent = counts * 100.0 / total if total else np.zeros(len(counts))
    labels = [f"{lo:g}-{hi:g}" for lo, hi in zip(edges[:-1], edges[1:])]
    return pd.DataFrame({"count": counts, "percent": percent}, index=pd.Index(labels, name="range"))


@dataclass(frozen=True, eq=False)
class FdrTable:
    """Per-security p-values with both FDR adjustments and the binned summary."""

    ids: Tuple[str, ...]
    p_values: np.ndarray
    bh_q: np.ndarray
    bhy_q: np.ndarray
    edges: Tuple[float, ...] = INTERCEPT_EDGES

    def __post_init__(self):
        m = len(self.ids)
        if not (len(self.p_values) == len(self.bh_q) == len(self.bhy_q) == m):
            raise DomainError("ids, p-values and q-values must have equal length")
        for q in (self.bh_q, self.bhy_q):
            if ((q < 0) | (q > 1)).any():
                raise DomainError("q-values must lie in [0, 1]")
        if (self.bh_q > self.bhy_q + 1e-15).any():
            raise DomainError("BH q-values must not exceed BHY q-values")

    @classmethod
    def from_p_values(cls, ids: Sequence[str], p_values, edges: Sequence[float] = INTERCEPT_EDGES) -> "FdrTable":
        p = _check_p(p_values)
        return cls(ids=tuple(ids), p_values=p, bh_q=bh_adjust(p), bhy_q=bhy_adjust(p), edges=tuple(edges))

    @property
    def m(self) -> int:
        return len(self.ids)

    def bins(self) -> pd.DataFrame:
        """Percentages of p, BH q and BHY q per value range."""
        return pd.DataFrame(
            {
                "p": bin_percentages(self.p_values, self.edges)["percent"],
                "bh_q": bin_percentages(self.bh_q, self.edges)["percent"],
                "bhy_q": bin_percentages(self.bhy_q, self.edges)["percent"],
            }
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"p": self.p_values, "bh_q": self.bh_q, "bhy_q": self.bhy_q},
            index=pd.Index(self.ids, name="ticker"),
        )

    def to_dict(self) -> dict:
        return {
            "edges": list(self.edges),
            "securities": [
                {"ticker": t, "p": float(p), "bh_q": float(b), "bhy_q": float(y)}
                for t, p, b, y in zip(self.ids, self.p_values, self.bh_q, self.bhy_q)
            ],
        }


@dataclass(frozen=True, eq=False)
class InterceptStudy:
    """Intercept t-test p-values of the multi-factor and the FF5 fits."""

    mfm: FdrTable
    ff5: FdrTable

    def table(self) -> pd.DataFrame:
        """
        Column percentages per p-value range.

        The first four columns are the conventional pairing (FF5 with BH,
        MFM with BHY); the other two complete both adjustments for both models.
        """
        ff5_bins, mfm_bins = self.ff5.bins(), self.mfm.bins()
        return pd.DataFrame(
            {
                "ff5_p": ff5_bins["p"],
                "ff5_bh_q": ff5_bins["bh_q"],
                "mfm_p": mfm_bins["p"],
                "mfm_bhy_q": mfm_bins["bhy_q"],
                "ff5_bhy_q": ff5_bins["bhy_q"],
                "mfm_bh_q": mfm_bins["bh_q"],
            }
        )

    def to_dict(self) -> dict:
        return {"mfm": self.mfm.to_dict(), "ff5": self.ff5.to_dict()}


def intercept_study(models: Sequence) -> InterceptStudy:
    if not models:
        raise EmptyStudyError("intercept study needs at least one fitted security")
    ids = [m.ticker for m in models]
    return InterceptStudy(
        mfm=FdrTable.from_p_values(ids, [m.intercept_p for m in models], INTERCEPT_EDGES),
        ff5=FdrTable.from_p_values(ids, [m.ff5_intercept_p for m in models], INTERCEPT_EDGES),
    )


def gof_study(models: Sequence) -> FdrTable:
    """Nested F-test p-values (multi-factor vs FF5) over the securities that have extra factors."""
    tested = [m for m in models if m.f_test is not None]
    if len(tested) < len(models):
        log.info(f"F study: {len(models) - len(tested)} securities have no extra factors and are left out")
    if not tested:
        raise EmptyStudyError("F study needs at least one security with extra factors")
    return FdrTable.from_p_values([m.ticker for m in tested], [m.f_test.p_value for m in tested], F_TEST_EDGES)


def adj_r2_comparison(models: Sequence) -> Dict[str, float]:
    if not models:
        raise EmptyStudyError("adjusted R^2 comparison needs at least one fitted security")
    mfm = np.array([m.adj_r2_mfm for m in models])
    ff5 = np.array([m.adj_r2_ff5 for m in models])
    return {
        "securities": len(models),
        "mean_adj_r2_mfm": float(mfm.mean()),
        "mean_adj_r2_ff5": float(ff5.mean()),
        "share_mfm_higher": float(np.mean(mfm > ff5)),
    }


def significance_shares(table: FdrTable, levels: Sequence[float] = (0.05, 0.01)) -> List[Dict[str, float]]:
    """Share of p, BH q and BHY q values strictly below each level."""
    rows = []
    for level in levels:
        rows.append(
            {
                "level": float(level),
                "p": float(np.mean(table.p_values < level)) if table.m else 0.0,
                "bh_q": float(np.mean(table.bh_q < level)) if table.m else 0.0,
                "bhy_q": float(np.mean(table.bhy_q < level)) if table.m else 0.0,
            }
        )
    return rows
