"""
Command-line front end: ``python -m sparse_mfm <command> [--config FILE] [--key value ...]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
from typing import List, Optional

from ..domain.errors import ConfigError, SparseMfmError
from ..logging import get_logger, init_logging
from .commands import COMMANDS
from .config import RunConfig

log = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

HELP = {
    "reduce": "orthogonalise and cluster the ETF universe into U",
    "fit": "fit every security and write the significance matrices",
    "test": "intercept and nested F studies with FDR control",
    "backtest": "weekly-refit long/short alpha portfolio",
    "simulate": "write a synthetic dataset with known ground truth",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse_mfm", description="Sparse multi-factor asset pricing models")
    parser.add_argument("--log-level", dest="log_level", default=None, help="overrides SPARSE_MFM_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        command = sub.add_parser(name, help=HELP[name])
        command.add_argument("--config", default=None, help="flat key = value configuration file")
        for key in RunConfig.keys():
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            command.add_argument(*flags, dest=key, default=None, metavar="VALUE")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    if args.log_level:
        init_logging(args.log_level, force=True)

    overrides = {key: getattr(args, key) for key in RunConfig.keys()}
    try:
        config = RunConfig.from_sources(args.config, overrides)
        return COMMANDS[args.command](config)
    except (ConfigError, FileNotFoundError) as exc:
        log.error(str(exc))
        return EXIT_USAGE
    except SparseMfmError as exc:
        log.error(f"{args.command} failed: {exc}")
        log.debug("Traceback", exc_info=True)
        return EXIT_FAILURE
    except Exception as exc:
        log.error(f"{args.command} failed unexpectedly: {exc}")
        log.debug("Traceback", exc_info=True)
        return EXIT_FAILURE
