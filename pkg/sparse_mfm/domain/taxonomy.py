"""
Reference classifications shipped with the package.

- ETF taxonomy: 10 classes split into 73 categories (``data/etf_taxonomy.csv``).
- SIC major groups: 2-digit groups with division letter and title
  (``data/sic_major_groups.csv``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from ..settings import ETF_TAXONOMY_FILE, SIC_GROUPS_FILE
from .errors import PanelSchemaError

# Fama-French five factor identifiers, in the order of the FF5 input file.
FF5_IDS = ("mkt_rf", "smb", "hml", "rmw", "cma")
MARKET_ID = "mkt_rf"


@dataclass(frozen=True)
class EtfTaxonomy:
    """Category -> class lookup for the ETF factor universe."""

    classes: List[str]
    category_class: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        unknown = sorted(set(self.category_class.values()) - set(self.classes))
        if unknown:
            raise PanelSchemaError(f"taxonomy references undeclared classes: {unknown}")

    @property
    def categories(self) -> List[str]:
        return list(self.category_class)

    def class_of(self, category: str) -> str:
        try:
            return self.category_class[category]
        except KeyError:
            raise PanelSchemaError(f"unknown ETF category {category!r}") from None

    def categories_of(self, class_name: str) -> List[str]:
        return [c for c, k in self.category_class.items() if k == class_name]


@dataclass(frozen=True)
class SicGroup:
    division: str
    group: str
    title: str


@dataclass(frozen=True)
class SicGroups:
    groups: Dict[str, SicGroup]

    def group_title(self, class_id: str) -> Optional[str]:
        group = self.groups.get(class_id)
        return group.title if group else None

    def division_of(self, class_id: str) -> Optional[str]:
        group = self.groups.get(class_id)
        return group.division if group else None


def read_taxonomy(path: Path) -> EtfTaxonomy:
    frame = pd.read_csv(path, dtype=str)
    if list(frame.columns) != ["class", "category"]:
        raise PanelSchemaError(f"{path}: expected header 'class,category'")
    duplicated = frame["category"][frame["category"].duplicated()].tolist()
    if duplicated:
        raise PanelSchemaError(f"{path}: categories listed twice: {duplicated}")
    classes = list(dict.fromkeys(frame["class"]))
    return EtfTaxonomy(classes=classes, category_class=dict(zip(frame["category"], frame["class"])))


def read_sic_groups(path: Path) -> SicGroups:
    frame = pd.read_csv(path, dtype=str)
    groups = {
        row.group: SicGroup(division=row.division, group=row.group, title=row.title)
        for row in frame.itertuples(index=False)
    }
    return SicGroups(groups=groups)


@lru_cache(maxsize=None)
def default_taxonomy() -> EtfTaxonomy:
    return read_taxonomy(ETF_TAXONOMY_FILE)


@lru_cache(maxsize=None)
def default_sic_groups() -> SicGroups:
    return read_sic_groups(SIC_GROUPS_FILE)
