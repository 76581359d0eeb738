"""
softmine - metric learning with a weighted contrastive loss
Command-line entry point: python -m app.main <subcommand> [flags]
"""
from typing import Optional, Sequence
import logging
import sys

from app.cli import run
from app.config import settings

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format=settings.LOG_FORMAT,
)

logger = logging.getLogger(__name__)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logger.debug(f"Starting {settings.APP_NAME} ({settings.APP_ENV})")
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
