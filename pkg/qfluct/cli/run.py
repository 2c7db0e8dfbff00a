import argparse
import sys

from qfluct.cli import EXIT_CHECK_FAILED, EXIT_OK
from qfluct.core.errors import ConfigInvalid
from qfluct.core.scenarios import run_scenario_detailed, trajectory_rows
from qfluct.db.preset_store import get_preset_store
from qfluct.models.scenario import ModeSpec, ScenarioConfig
from qfluct.utils.file_utils import load_config, write_report, write_trajectory_dump


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Run one scenario and verify its checks")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=str, help="Path to a JSON scenario config")
    source.add_argument("--scenario", type=str, help="Name of a built-in scenario (see `presets list`)")
    parser.add_argument("--mode", choices=["exact", "sample"], default=None, help="Override the config's mode")
    parser.add_argument("--samples", type=int, default=None, help="Number of samples in sample mode")
    parser.add_argument("--seed", type=int, default=None, help="Sampling seed in sample mode")
    parser.add_argument("--dump-trajectories", type=str, default=None, help="Write the trajectory table as CSV")
    parser.add_argument("--out", type=str, default=None, help="Write the JSON report here instead of stdout")
    parser.add_argument("--workers", type=int, default=None, help="Threads for enumeration and sampling")
    parser.set_defaults(func=run_command)


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    """Load the config named on the command line and apply the mode overrides."""
    if args.config:
        config = load_config(args.config)
    else:
        config = get_preset_store().get_scenario(args.scenario)
        if config is None:
            raise ConfigInvalid(f"unknown scenario '{args.scenario}'")

    mode = config.mode.model_dump()
    if args.mode is not None:
        mode["kind"] = args.mode
    if args.samples is not None:
        mode["n"] = args.samples
    if args.seed is not None:
        mode["seed"] = args.seed
    if mode["kind"] == "sample" and mode.get("n") is None:
        raise ConfigInvalid("sample mode needs --samples or mode.n in the config")
    return config.model_copy(update={"mode": ModeSpec.model_validate(mode)})


def run_command(args: argparse.Namespace) -> int:
    if args.workers is not None and args.workers < 1:
        raise ConfigInvalid(f"--workers must be at least 1, got {args.workers}")
    config = resolve_config(args)
    if args.dump_trajectories and config.mode.kind != "exact":
        raise ConfigInvalid("--dump-trajectories needs exact mode")

    run = run_scenario_detailed(config, workers=args.workers)
    report = run.report
    if args.out:
        write_report(report, args.out)
    else:
        sys.stdout.write(report.model_dump_json(indent=2) + "\n")
    if args.dump_trajectories:
        write_trajectory_dump(trajectory_rows(run.frame, run.table), args.dump_trajectories)

    for check in report.failed_checks():
        sys.stderr.write(f"FAILED {check.name}: residual {check.residual:.3e} > tolerance {check.tolerance:.1e}\n")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED
