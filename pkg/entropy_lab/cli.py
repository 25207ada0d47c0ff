"""CLI related functions and utilities"""
from __future__ import annotations

import argparse
import logging
import shlex

import pandas as pd
from InquirerPy import inquirer
from InquirerPy.base.control import Choice

from entropy_lab import __version__
from entropy_lab.util import DEFAULT_MAX_WORKERS


class TextFormat:
    """Codes to enable text formatting"""

    ORANGE = "\033[38;5;208m"
    GREEN = "\033[38;5;70m"
    RED = "\033[38;5;196m"
    LIGHT_GRAY = "\033[38;5;249m"
    BOLD = "\033[1m"
    ITALIC = "\033[3m"
    RESET = "\033[0m"


"""Subcommands that run one registered experiment"""
SUBCOMMANDS = {
    "constants": "heat-constants",
    "tangent": "tangent-oracle",
    "weak-continuity": "weak-time-continuity",
    "entropy-check": "entropy-inequality",
    "kato": "kato",
    "contraction": "l1-contraction",
    "frac-bv": "fractional-bv",
    "doubling": "doubling",
    "convergence": "eps-cauchy",
    "ito-check": "anticipating-ito",
}

"""Flags forwarded into the config layer, by config key"""
FLAG_KEYS = ("seed", "n_mc", "workers", "output", "case", "r_index", "node", "eps_list")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    config_group = common.add_argument_group(
        "configuration", "layered over the experiment defaults, in this order"
    )
    config_group.add_argument(
        "-c",
        "--config",
        help="path to a flat key = value config file",
    )
    config_group.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key; may be repeated",
    )
    config_group.add_argument("--seed", help="root seed of every noise stream")
    config_group.add_argument("--n-mc", dest="n_mc", help="number of Monte Carlo samples")

    run_group = common.add_argument_group("execution")
    run_group.add_argument(
        "-w",
        "--workers",
        help=(
            "the number of worker threads for Monte Carlo chunks (defaults to"
            f" ENTROPY_LAB_WORKERS or {DEFAULT_MAX_WORKERS})"
        ),
    )
    run_group.add_argument(
        "-o",
        "--output",
        help="directory receiving CSVs, summaries and results.jsonl",
    )
    run_group.add_argument(
        "--report",
        help="path of the html report (defaults to <output>/report.html)",
    )
    run_group.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log solver diagnostics (-vv for debug output)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with one subcommand per lab task"""
    parser = argparse.ArgumentParser(
        prog="entropy_lab",
        description="""Run reproducible numerical experiments on viscous stochastic
        conservation laws and their entropy solutions""",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_options()
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    commands.add_parser(
        "solve", parents=[common], help="solve one noise path and write binary snapshots"
    )
    commands.add_parser("list", help="list the registered experiments")
    run_parser = commands.add_parser(
        "run", parents=[common], help="run registered experiments by name"
    )
    run_parser.add_argument(
        "names",
        nargs="*",
        help="registry names, or 'all'; prompts for a selection when empty",
    )

    for command, name in SUBCOMMANDS.items():
        sub = commands.add_parser(command, parents=[common], help=f"run the {name} experiment")
        if command == "tangent":
            sub.add_argument("--r-index", dest="r_index", help="birth step of the tangent")
            sub.add_argument("--node", help="noise node of the first cell")
        elif command == "weak-continuity":
            sub.add_argument("--r-index", dest="r_index", help="birth step of the derivative")
        elif command == "convergence":
            sub.add_argument("--eps-list", dest="eps_list", help="comma separated viscosities")
        elif command == "ito-check":
            sub.add_argument("--case", help="Ito case name, or 'all'")
    return parser


def parse_cli_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments"""
    return build_parser().parse_args(argv)


def configure_logging(verbose: int):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def flags(args: argparse.Namespace) -> dict[str, str]:
    """Raw subcommand flag values by config key"""
    return {k: str(getattr(args, k)) for k in FLAG_KEYS if getattr(args, k, None) is not None}


def experiment_names(args: argparse.Namespace, available: pd.DataFrame) -> list[str]:
    """The registry names selected on the command line, or interactively"""
    if args.command in SUBCOMMANDS:
        return [SUBCOMMANDS[args.command]]
    if args.names == ["all"]:
        return list(available["name"])
    if args.names:
        return list(args.names)
    return inquirer.checkbox(
        message="Choose the experiments to run:",
        choices=[
            Choice(value=row.name, name=f"{row.name}: {row.anchor}")
            for row in available.itertuples()
        ],
        validate=lambda result: len(result) > 0,
        invalid_message="Select at least one experiment.",
        wrap_lines=True,
        long_instruction="\nUse space to select and enter to confirm.",
    ).execute()


def generate_cli_for_next_time(args: argparse.Namespace, names: list[str]) -> str:
    """A command that reruns the same experiments without the prompt"""
    parts = ["entropy_lab"]
    if args.command in SUBCOMMANDS:
        parts.append(args.command)
    else:
        parts += ["run", *names]
    if args.config:
        parts += ["-c", args.config]
    for item in args.set:
        parts += ["--set", item]
    for key, value in flags(args).items():
        parts += [f"--{key.replace('_', '-')}", value]
    return shlex.join(parts)


def print_experiments(table: pd.DataFrame):
    for row in table.itertuples():
        print(f"{TextFormat.BOLD}{row.name}{TextFormat.RESET}  {row.title}")
        print(f"    {TextFormat.LIGHT_GRAY}{row.anchor}{TextFormat.RESET}")


def print_results(lab):
    """Print one line per assertion of every experiment that ran"""
    for experiment in lab.experiments:
        record = lab.records.get(experiment.name)
        color = TextFormat.GREEN if experiment.status.name in ("PASS", "WARN") else TextFormat.RED
        print(f"\n{TextFormat.BOLD}{experiment.title}{TextFormat.RESET} "
              f"{color}{experiment.status.name}{TextFormat.RESET}")
        if record is not None:
            print(f"  {TextFormat.LIGHT_GRAY}config {record.config_hash[:12]}"
                  f" ({record.wall_clock:.1f}s){TextFormat.RESET}")
        for assertion in experiment.assertions:
            print(f"  {assertion}")
        for message in experiment.caught:
            print(f"  {TextFormat.ITALIC}warning: {message}{TextFormat.RESET}")
        if experiment.error:
            print(f"  {TextFormat.RED}{experiment.error}{TextFormat.RESET}")
    print(f"\nGrade: {TextFormat.BOLD}{lab.grade}{TextFormat.RESET}")


def welcome_message():
    """Prints a welcome message."""
    print(
        f"""Welcome to {TextFormat.ORANGE}{TextFormat.BOLD}entropy_lab{TextFormat.RESET}\n"""
    )


def print_cli_command(command: str):
    """Print the CLI command that reruns the same experiments"""
    print(
        f"""\nTo skip the selection next time, just run:
  {TextFormat.ITALIC}{TextFormat.LIGHT_GRAY}{command}{TextFormat.RESET}\n"""
    )
