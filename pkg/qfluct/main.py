import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from qfluct import __version__
from qfluct.cli import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, presets, run, sweep
from qfluct.core.errors import CheckFailed, ConfigInvalid
from qfluct.utils.log_utils import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfluct",
        description="Verify information fluctuation theorems for bipartite quantum systems",
    )
    parser.add_argument("--verbose", action="store_true", help="Log debug lines with timings")
    parser.add_argument("--version", action="version", version=f"qfluct {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register command groups
    run.register(subparsers)
    sweep.register(subparsers)
    presets.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except CheckFailed as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CHECK_FAILED
    except (ConfigInvalid, ValidationError) as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG_ERROR
