from __future__ import annotations
import logging
import os

_LOG_INITIALIZED = False

LEVEL_MAP = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


def _resolve_level(level: str | int | None) -> int:
    if level is None:
        level_env = os.getenv("SPARSE_MFM_LOG_LEVEL", "INFO").upper()
        return LEVEL_MAP.get(level_env, logging.INFO)
    if isinstance(level, str):
        return LEVEL_MAP.get(level.upper(), logging.INFO)
    return level


def init_logging(level: str | int | None = None, force: bool = False) -> None:
    """Configure the root logger once; ``force`` re-applies a new level (CLI flag)."""
    global _LOG_INITIALIZED
    if _LOG_INITIALIZED and not force:
        return

    logging.basicConfig(
        level=_resolve_level(level),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        force=force,
    )
    _LOG_INITIALIZED = True


def get_logger(name: str) -> logging.Logger:
    if not _LOG_INITIALIZED:
        init_logging()
    return logging.getLogger(name)
