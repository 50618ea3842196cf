"""Command line: ``collapse-lab run|validate|scan|version``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, parse_config

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text)


def _levels(raw: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {raw!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("levels must be integers >= 1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collapse-lab", description="GRW / CSL / Bohm lattice laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write CSV outputs")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=None, help="replica concurrency (default: $COLLAPSE_LAB_THREADS)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")

    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("config")

    p = sub.add_parser("scan", help="continuum-limit ladder (k*lambda, alpha/k) for a grw scenario")
    p.add_argument("config")
    p.add_argument("--levels", type=_levels, default=None, help="comma-separated levels, e.g. 1,2,4,8")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--figures", action="store_true")

    sub.add_parser("version", help="print the version")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK

    from dataclasses import replace

    from .runner import run_scan, run_scenario

    if args.figures:
        cfg = replace(cfg, analysis=replace(cfg.analysis, figures=True))
    base = Path(args.config).resolve().parent
    try:
        if args.command == "run":
            record = run_scenario(cfg, base, threads=args.threads)
        else:
            record = run_scan(cfg, args.levels, base, threads=args.threads)
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit code 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in record.failures:
        print(f"replica {f['replica']} failed: {f['error']}: {f['message']}", file=sys.stderr)
    print(f"wrote {len(record.manifest)} files in {record.wall_time:.2f}s")
    return EXIT_RUNTIME if record.failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
