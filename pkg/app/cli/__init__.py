"""
Command-line interface

Each subcommand lives in its own module and registers itself on one parser.
Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from argparse import ArgumentParser
from typing import Optional, Sequence
import logging

from pydantic import ValidationError

from app.cli import ablate, evaluate, generate, gradcheck, inspect_batch, train
from app.cli.common import common_parser
from app.config import settings
from app.errors import ConfigurationError, SoftMineError

logger = logging.getLogger(__name__)

COMMANDS = (generate, train, evaluate, inspect_batch, gradcheck, ablate)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog=settings.APP_NAME,
        description="Weighted contrastive metric learning with online soft mining and class-aware attention",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    parent = common_parser()
    for command in COMMANDS:
        command.register(subparsers, parent)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        logger.error(f"{args.command}: invalid configuration\n{exc}")
        return 1
    except (ConfigurationError, ValueError) as exc:
        logger.error(f"{args.command}: {exc}")
        return 1
    except (SoftMineError, OSError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 2


__all__ = ["build_parser", "run"]
