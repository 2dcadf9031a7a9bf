# Allows `python -m sparse_mfm <command>` to run the CLI directly.
import sys

from .app import run

if __name__ == "__main__":  # pragma: no cover
    sys.exit(run())
