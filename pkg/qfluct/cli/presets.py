import argparse
import sys

from qfluct.cli import EXIT_OK
from qfluct.core.errors import ConfigInvalid
from qfluct.db.preset_store import get_preset_store


def register(subparsers) -> None:
    parser = subparsers.add_parser("presets", help="Inspect built-in scenarios and component presets")
    actions = parser.add_subparsers(dest="action", required=True)

    list_parser = actions.add_parser("list", help="List preset names with descriptions")
    list_parser.set_defaults(func=list_command)

    show_parser = actions.add_parser("show", help="Print a built-in scenario as a JSON config")
    show_parser.add_argument("name")
    show_parser.add_argument("--expand", action="store_true", help="Replace presets by literal matrices")
    show_parser.set_defaults(func=show_command)


def list_command(args: argparse.Namespace) -> int:
    for group, entries in get_preset_store().list_presets().items():
        sys.stdout.write(f"{group}:\n")
        for name, description in entries:
            sys.stdout.write(f"  {name:<26} {description}\n")
    return EXIT_OK


def show_command(args: argparse.Namespace) -> int:
    store = get_preset_store()
    config = store.get_scenario(args.name)
    if config is None:
        raise ConfigInvalid(f"unknown scenario '{args.name}'")
    if args.expand:
        config = store.expand(config)
    sys.stdout.write(config.model_dump_json(indent=2, exclude_none=True) + "\n")
    return EXIT_OK
