from __future__ import annotations

import sys

from loguru import logger

from .cli_args import build_parser
from .fock import CutoffTooSmallError
from .histogram import InsufficientSamplesError
from .pipeline_service import COMMANDS
from .sampling import EnvelopeViolationError
from .single_detector import SingularSelectionError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

NUMERICAL_ERRORS = (
    SingularSelectionError,
    EnvelopeViolationError,
    CutoffTooSmallError,
    InsufficientSamplesError,
)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except NUMERICAL_ERRORS as exc:
        logger.bind(event="pipeline.error", status="failed", error=type(exc).__name__).error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError, RuntimeError) as exc:
        logger.bind(event="pipeline.error", status="usage", error=type(exc).__name__).error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


__all__ = ["build_parser", "main"]
