from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from .catalog import load_catalog, resolve_catalog_path
from .config import ConfigError, apply_overrides, load_config
from .formatting import format_summary_table
from .harness import aggregate, load_traces, run_experiment
from .report import write_report


logger = logging.getLogger("beacon.cli")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beacon-search", description="Novelty search benchmarks with GP Thompson sampling.")
    parser.add_argument("--log-level", default=None, help="override logging.level from the config")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment config and write traces plus the report")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--replicates", type=int, default=None)
    run.add_argument("--output", default=None)
    run.add_argument("--workers", type=int, default=None)

    report = sub.add_parser("report", help="aggregate persisted traces into CSV/SVG/summary")
    report.add_argument("trace_dir")
    report.add_argument("--output", default=None)

    validate = sub.add_parser("validate", help="check a config without running it")
    validate.add_argument("config")

    sub.add_parser("list-problems", help="list the built-in problems")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config = apply_overrides(config, seed=args.seed, replicates=args.replicates, output=args.output)
    _configure_logging(args.log_level or config.logging.level)
    result = run_experiment(config, workers=args.workers)
    if result.traces:
        report = aggregate(result.traces)
        paths = write_report(report, config.output_dir)
        print(format_summary_table(report.final_rows(), report.num_bins))
        for fmt, path in sorted(paths.items()):
            print(f"{fmt}: {path}")
    for failure in result.status.failures():
        print(f"{failure.label} replicate {failure.replicate}: {failure.detail}", file=sys.stderr)
    return EXIT_FAILED if result.failed or not result.traces else EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    _configure_logging(args.log_level or "INFO")
    traces = load_traces(args.trace_dir)
    if not traces:
        print(f"no traces found under {args.trace_dir}", file=sys.stderr)
        return EXIT_FAILED
    report = aggregate(traces)
    output_dir = args.output or args.trace_dir
    paths = write_report(report, output_dir)
    print(format_summary_table(report.final_rows(), report.num_bins))
    for fmt, path in sorted(paths.items()):
        print(f"{fmt}: {path}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"ok: {os.path.abspath(args.config)} (hash {config.config_hash()[:12]})")
    return EXIT_OK


def _cmd_list_problems(args: argparse.Namespace) -> int:
    catalog = load_catalog(resolve_catalog_path())
    for name in catalog.names():
        entry = catalog.problems[name]
        dim = entry.dim if entry.dim is not None else "-"
        print(f"{name:<18} kind={entry.kind:<14} dim={dim:<3} bins={entry.bins_per_dim}  {entry.description}")
    print(f"{'pool':<18} kind=file           CSV pool (problem.pool_path, input_dim, outcome_dim)")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "report": _cmd_report,
    "validate": _cmd_validate,
    "list-problems": _cmd_list_problems,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        logger.exception("%s failed", args.command)
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
