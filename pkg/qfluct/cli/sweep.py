import argparse
import sys
from typing import List

from qfluct.cli import EXIT_CHECK_FAILED, EXIT_OK
from qfluct.core.errors import ConfigInvalid
from qfluct.core.scenarios import sweep
from qfluct.utils.file_utils import write_report


def _parse_list(raw: str, cast, label: str) -> List:
    try:
        return [cast(item) for item in raw.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigInvalid(f"could not parse {label} '{raw}': {e}") from e


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="Verify the theorems on random instances")
    parser.add_argument("--n", type=int, required=True, help="Number of random instances")
    parser.add_argument("--dims", type=str, default="2,2,2", help="dA,dB,dR")
    parser.add_argument("--beta", type=str, default="1.0", help="Inverse temperature, or a comma-separated list cycled over instances")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rank", type=int, default=None, help="Fix the initial-state rank instead of drawing it")
    parser.add_argument("--family", choices=["haar", "classical"], default="haar")
    parser.add_argument("--out", type=str, default=None, help="Write the JSON summary here instead of stdout")
    parser.add_argument("--workers", type=int, default=None)
    parser.set_defaults(func=sweep_command)


def sweep_command(args: argparse.Namespace) -> int:
    dims = _parse_list(args.dims, int, "--dims")
    betas = _parse_list(args.beta, float, "--beta")
    summary = sweep(
        args.n, dims, betas, args.seed,
        rank=args.rank, workers=args.workers, family=args.family,
    )
    if args.out:
        write_report(summary, args.out)
    else:
        sys.stdout.write(summary.model_dump_json(indent=2) + "\n")
    failed = [row.instance for row in summary.rows if not row.passed]
    if failed:
        sys.stderr.write(f"FAILED instances: {failed}\n")
    return EXIT_OK if summary.passed else EXIT_CHECK_FAILED
