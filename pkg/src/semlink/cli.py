"""Command-line interface.

Subcommands: prepare-data, train, sweep, baseline, report. Each reads one
TOML config (built-in defaults when omitted). Exit codes: 0 success,
1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import ConfigError, load_config, with_output_dir
from .runner import cmd_baseline, cmd_prepare_data, cmd_report, cmd_sweep, cmd_train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semlink",
        description=(
            "Simulate multi-task semantic transmission of traffic signs over "
            "a Rayleigh-faded vehicle-satellite link, next to a 16-QAM baseline."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("prepare-data", "materialize the configured corpus as PNGs + manifest"),
        ("train", "train one codec per (task, code size) and save checkpoints"),
        ("sweep", "evaluate trained codecs across the transmit-power grid"),
        ("baseline", "run the QAM-16 chain and SVM/NN classifiers across the grid"),
        ("report", "summarize sweep.csv into summary.json and refresh plots"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", "-c", default=None, help="TOML config path")
        cmd.add_argument(
            "--output", "-o", default=None, help="override [output] dir from the config"
        )
    return parser


_COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "baseline": cmd_baseline,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.output:
            cfg = with_output_dir(cfg, args.output)
            cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_RUNTIME
    if isinstance(result, (list, tuple)):
        for item in result:
            print(item)
    elif result is not None:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
