"""Command-line entry point: ``bayestrial <command> --config PATH``.

Exit codes: 0 success, 1 configuration error, 2 computation error, 3 I/O error.
"""

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, parse_config
from .exceptions import BudgetExceededError, CalibrationError, DegenerateUpdateError
from .report import COMMANDS, emit, run

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 1, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="bayestrial", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides execution.master_seed)")
    p.add_argument("--out", help="output directory (default: JSON to stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--workers", type=int, default=1,
                   help="threads for Monte Carlo; results do not depend on it")
    p.add_argument("--timestamp", help="timestamp recorded in the manifest (default: none)")
    return p


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=stderr)
        return EXIT_CONFIG
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror}", file=stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError([("--seed", "must lie in [0, 2**64)")])
            cfg = replace(cfg, execution={**cfg.execution, "master_seed": args.seed})
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=stderr)
        return EXIT_CONFIG
    try:
        report = run(cfg, args.command, args.workers, args.timestamp)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=stderr)
        return EXIT_CONFIG
    except (BudgetExceededError, CalibrationError, DegenerateUpdateError,
            ValueError, RuntimeError) as exc:
        print(f"computation error in '{args.command}': {exc}", file=stderr)
        return EXIT_COMPUTE
    try:
        for path in emit(report, args.format, args.out, stdout):
            print(path, file=stderr)
    except OSError as exc:
        print(f"error: cannot write {exc.filename or args.out}: {exc.strerror}", file=stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
