"""Command-line entry point: ``mvem run <config> [--out DIR] [--format csv|json] [--threads N]``.

Exit status is 0 when every run completed, 1 when some run failed and 2 on
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, parse_config
from .study import RunReport, run_convergence_study

COLUMNS = ["problem", "mesh", "h", "k", "variant", "stabilization", "err_p", "err_u", "cond_K", "rate_p", "rate_u",
           "wall_ms"]

EXIT_OK, EXIT_RUN_FAILED, EXIT_USAGE = 0, 1, 2


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_records(report: RunReport) -> tuple[list, list]:
    """Column names and per-row dicts; the ``error`` column appears only when a run failed."""
    columns = COLUMNS + (["error"] if not report.ok else [])
    return columns, [{c: getattr(r, c) for c in columns} for r in report.rows]


def format_csv(report: RunReport) -> str:
    columns, records = report_records(report)
    buf = io.StringIO()
    writer = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_cell(rec[c]) for c in columns])
    return buf.getvalue()


def format_json(report: RunReport) -> str:
    _, records = report_records(report)
    return json.dumps(records, indent=2) + "\n"


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("MVEM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError([f"MVEM_THREADS must be an integer, got {env!r}"]) from None
        if n < 1:
            raise ConfigError(["MVEM_THREADS must be >= 1"])
        return n
    return None


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvem", description="Mixed virtual element benchmark runner.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a convergence/conditioning sweep from a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, help="directory for the report file")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--threads", type=_positive_int)
    return parser


def run_and_emit(config_path: Path, out_dir=None, fmt=None, threads=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        config = parse_config(Path(config_path).read_text(encoding="utf-8"))
        n = _threads(threads)
    except (OSError, UnicodeDecodeError) as exc:
        print(f"mvem: cannot read {config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"mvem: invalid configuration {config_path}:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    if fmt:
        config = replace(config, format=fmt)
    if n:
        config = replace(config, threads=n)

    target = None
    if out_dir is not None or config.output:
        name = Path(config.output).name if config.output else f"{Path(config_path).stem}.{config.format}"
        target = Path(out_dir) / name if out_dir is not None else Path(config.output)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "a", encoding="utf-8"):
                pass  # fail early, before any solve
        except OSError as exc:
            print(f"mvem: cannot write {target}: {exc}", file=sys.stderr)
            return EXIT_USAGE

    report = run_convergence_study(config)
    text = format_json(report) if config.format == "json" else format_csv(report)
    if target is None:
        stdout.write(text)
    else:
        try:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"mvem: cannot write {target}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    for row in report.rows:
        if row.error:
            print(f"mvem: {row.mesh} k={row.k} {row.variant} {row.stabilization}: {row.error}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_RUN_FAILED


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_and_emit(args.config, args.out, args.format, args.threads)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
