"""Sparse multi-factor asset pricing: factor reduction, sparse selection, FDR tests and backtests."""

__version__ = "0.1.0"

__all__ = ["__version__"]
