from typing import List, Optional

from .cli.main import main
from .logging import get_logger

log = get_logger(__name__)


def run(argv: Optional[List[str]] = None) -> int:
    code = main(argv)
    log.debug(f"Exiting with code {code}")
    return code
