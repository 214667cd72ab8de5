"""``harmocont`` command-line interface.

Exit codes: 0 success, 1 verification failed, 2 configuration / input
error, 3 numerical failure.  ``HARMOCONT_LOG`` sets the log level
(``DEBUG``, ``INFO``, ``WARNING``, ...).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError, ExportError, HarmocontError
from .export import export_chart, load_chart
from .files import read_solution
from .runner import run
from .verify import verify_solution

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
LOG_ENV = "HARMOCONT_LOG"


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def cmd_run(args) -> int:
    overrides = {"out_dir": args.out_dir, "mesh": args.mesh, "degree": args.degree,
                 "max_steps": args.max_steps}
    try:
        cfg = load_config(args.config, overrides)
        result = run(cfg, overrides)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, res in result.stages.items():
        print(f"{name}: {len(res.files)} branch file(s), {len(res.solutions)} labeled solution(s)")
    if result.exit_code:
        print(f"numerical failure: {result.error} (partial results in {os.path.normpath(cfg.out_dir)})", file=sys.stderr)
    else:
        print(f"results in {os.path.normpath(cfg.out_dir)}")
    return result.exit_code


def cmd_export(args) -> int:
    try:
        spec, base = load_chart(args.manifest)
        out = Path(args.out_dir) if args.out_dir else base / spec.name
        manifest = export_chart(spec, out)
    except (ConfigurationError, ExportError) as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{len(manifest['curves'])} curve(s) written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        data = read_solution(args.solution)
    except (OSError, ValueError) as exc:
        print(f"cannot read solution file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = verify_solution(data, periods=args.periods)
    except HarmocontError as exc:
        print(f"verification could not run: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK if report.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harmocont", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a run configuration")
    r.add_argument("config")
    r.add_argument("--out-dir")
    r.add_argument("--mesh", type=int, help="number of mesh intervals")
    r.add_argument("--degree", type=int, help="collocation degree")
    r.add_argument("--max-steps", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("export", help="write chart data described by a chart manifest")
    e.add_argument("manifest")
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("verify", help="check a labeled solution by direct integration")
    v.add_argument("solution")
    v.add_argument("--periods", type=int, default=10)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
