__version__ = "0.1.0"

import sys
from pathlib import Path

from entropy_lab import cli
from entropy_lab.config import resolve_config
from entropy_lab.experiments import all_experiments
from entropy_lab.lab import LabEnvironment, list_experiments, lookup, solve_snapshots
from entropy_lab.util import ConfigError


def run(argv: list[str] | None = None):
    """Run the CLI.

    Run the cli by:
    - parsing cli args
    - selecting experiments (prompting when none are named)
    - running experiments
    - writing tables, summaries and the html report

    Exits with status 1 when an experiment fails or cannot run, and 2 on a
    configuration error.
    """
    args = cli.parse_cli_args(argv)
    cli.configure_logging(getattr(args, "verbose", 0))

    if args.command == "list":
        cli.print_experiments(list_experiments())
        return

    cli.welcome_message()
    try:
        if args.command == "solve":
            cfg = resolve_config("solve", {}, args.config, args.set, cli.flags(args))
            folder = solve_snapshots(cfg)
            print(f"Wrote snapshots to {folder}")
            return
        names = cli.experiment_names(args, list_experiments())
        for name in names:
            lookup(name)
    except ConfigError as e:
        print(f"{cli.TextFormat.BOLD}Configuration error:{cli.TextFormat.RESET} {e}")
        sys.exit(2)

    lab = LabEnvironment(args.config, args.set, cli.flags(args))
    all_experiments.register(lab, names)
    lab.run_experiments()
    cli.print_results(lab)

    cli.print_cli_command(cli.generate_cli_for_next_time(args, names))

    output = args.report or str(Path(args.output or "results") / "report.html")
    write_output_file(output, lab.html)
    print(f"Report written to {output}")

    if not lab.all_passed:
        sys.exit(1)


def write_output_file(output_path: str, content: str, mode: str = "w"):
    """Write "content" to the specified output_path.

    Create any necessary directories and then write the data in content
    to the specified output path.

    Args:
        output_path (str): The path to the output file.
        content (str): The content to write to the file.
    """
    Path(output_path).resolve().parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, mode) as f:
        f.write(content)
