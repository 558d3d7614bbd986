"""
Command-line entry point of the Yang-Mills-Dirac workbench

    ymd simulate|gauge-fix|verify|norms|convention --config <path>
        [--checkpoint <path>] [--out <dir>] [--trace <dir>] [--quick] [--verbose]

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure, 4 I/O or checkpoint failure, 5 unexpected error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from core.errors import ConfigError
from core.simulation import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNEXPECTED,
    EXIT_VERIFY_FAILED,
    run_convention,
    run_gauge_fix,
    run_norms,
    run_simulation,
    run_verify,
)
from core.spectral import KINDS
from utils.config_manager import ConfigManager
from utils.output_formatter import format_error, format_run_summary, format_verify_table, print_progress

COMMANDS = ("simulate", "gauge-fix", "verify", "norms", "convention")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ymd", description="Yang-Mills-Dirac simulator and verification workbench")
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", "-c", help="JSON run configuration (defaults when omitted)")
    parser.add_argument("--checkpoint", help="Input checkpoint for gauge-fix")
    parser.add_argument("--out", "-o", help="Output directory (overrides output.directory)")
    parser.add_argument("--trace", help="Trace directory for norms (default: <out>/trace)")
    parser.add_argument("--quick", action="store_true", help="Run the verification suite at N = 8")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    # Fault injection for the verification suite
    parser.add_argument("--corrupt", choices=KINDS, help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line interface; returns the exit code"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(levelname)s %(asctime)s] %(message)s",
    )
    color = sys.stdout.isatty()

    try:
        config = ConfigManager(args.config).run_config()
    except ConfigError as e:
        logging.error(str(e))
        print(format_error(str(e), color))
        return EXIT_CONFIG

    def show_progress(update):
        if "step" in update and sys.stderr.isatty():
            print_progress(int(round(update["progress"] * 1000)), 1000, prefix="Evolving", color=color)

    try:
        if args.command == "simulate":
            result = run_simulation(config, args.out, callback=show_progress)
        elif args.command == "gauge-fix":
            result = run_gauge_fix(config, args.checkpoint, args.out)
        elif args.command == "norms":
            result = run_norms(config, args.trace, args.out)
        elif args.command == "convention":
            result = run_convention(config, args.out)
        else:
            result = run_verify(config, args.out, quick=args.quick, corrupt=args.corrupt)
    except KeyboardInterrupt:
        print("\nOperation canceled by user")
        return EXIT_UNEXPECTED

    if not result["success"]:
        print(format_error(result["error"], color))
        return result["exit_code"]
    if args.command == "verify":
        print(format_verify_table(result["rows"], color))
        return EXIT_OK if result["passed"] else EXIT_VERIFY_FAILED
    print(format_run_summary(result, color))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
