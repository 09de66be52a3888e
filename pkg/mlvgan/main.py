"""
MLVGAN - Multi-level Video GAN

Main command-line entry point.
"""

import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from .cli import build_parser
from .config import get_settings
from .exceptions import MlvganError

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    settings = get_settings()
    level = logging.DEBUG if verbose or settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    Returns:
        0 on success, 2 for usage and configuration errors, 3 for runtime failures
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except MlvganError as e:
        logger.error(str(e))
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except Exception:
        logger.exception(f"Command '{args.command}' failed")
        return 3


if __name__ == "__main__":
    sys.exit(main())
