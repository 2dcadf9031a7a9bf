"""
Error types raised by the estimation domain.

All errors derive from ``SparseMfmError`` which itself is a ``ValueError``,
so callers that only care about "bad input" can keep catching ``ValueError``.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence


class SparseMfmError(ValueError):
    """Base class for every domain error."""


class ConfigError(SparseMfmError):
    """Invalid run configuration or command-line usage."""


class PanelSchemaError(SparseMfmError):
    """Input file has the wrong header, duplicate columns or bad metadata."""


class DateParseError(PanelSchemaError):
    def __init__(self, path: str, row: int, raw: str):
        self.path = path
        self.row = row
        self.raw = raw
        super().__init__(f"{path}: row {row}: cannot parse date {raw!r}")


class AlignmentError(SparseMfmError):
    def __init__(self, message: str, missing: Optional[Iterable] = None):
        self.missing = list(missing or [])
        if self.missing:
            shown = ", ".join(str(d)[:10] for d in self.missing[:10])
            more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
            message = f"{message}; missing dates: {shown}{more}"
        super().__init__(message)


class DomainError(SparseMfmError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientDataError(SparseMfmError):
    """Not enough observations for the requested fit."""


class SingularDesignError(SparseMfmError):
    def __init__(self, column: int, name: Optional[str] = None):
        self.column = column
        self.name = name
        label = f"{name!r} (column {column})" if name is not None else f"column {column}"
        super().__init__(f"design matrix is rank deficient: {label} is linearly dependent")


class DegenerateSeriesError(SparseMfmError):
    """A series has zero variance (or is identically zero) where variation is required."""


class InsufficientOverlapError(SparseMfmError):
    """Two series share too few jointly observed rows."""


class DegenerateProjectionError(SparseMfmError):
    """Projection onto an identically zero base vector."""


class AggregationError(SparseMfmError):
    def __init__(self, kind: str, ident: str):
        self.kind = kind
        self.ident = ident
        super().__init__(f"unmapped {kind} {ident!r}: no class assignment available")


class EmptyStudyError(SparseMfmError):
    """A cross-sectional study was requested over zero models."""


def format_errors(title: str, errors: Sequence[str]) -> str:
    return f"{title}:\n" + "\n".join(f"  - {err}" for err in errors)
