"""Command-line entry point: ``eternal-lab run | regress | schema``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import SCHEMA, load_config
from .errors import ConfigError, MissingGolden
from .runner import EXIT_CHECK, EXIT_CONFIG, EXIT_PASS, regress, run

OUT_ENV = "ETERNAL_LAB_OUT"

EPILOG = f"""\
output directory: --out wins, then ${OUT_ENV}, then the config's output_dir,
then ./runs/<config name>.

exit codes: 0 every check passed, 1 a check failed (or regress found drift),
2 invalid config or missing golden run, 3 internal solver error.
"""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eternal-lab",
        description="Run verification experiments on positive eternal solutions of parabolic equations.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("config", help="path to a JSON config, or the name of a bundled one (e.g. heat_interval.json)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--workers", type=int, default=1, help="experiments of a suite run concurrently (default 1)")
    g = sub.add_parser("regress", help="compare a fresh run against a golden run")
    g.add_argument("golden")
    g.add_argument("fresh")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("runs") / cfg.name


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(SCHEMA, indent=2, sort_keys=True))
        return EXIT_PASS
    if args.command == "regress":
        try:
            diff = regress(args.golden, args.fresh)
        except MissingGolden as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(diff.to_dict(), indent=2, sort_keys=True))
        return EXIT_PASS if diff.identical else EXIT_CHECK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    try:
        result = run(cfg, out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for ch in result.children:
        status = "ERROR" if ch.errored else ("PASS" if ch.passed else "FAIL")
        line = f"{status:5s} {ch.name} ({ch.kind}, {ch.wall_time:.1f}s)"
        if ch.error:
            line += f": {ch.error['type']}: {ch.error['message']}"
        elif not ch.passed:
            line += ": " + ", ".join(ch.failed_checks())
        print(line)
    print(f"{'PASS' if result.passed else 'FAIL'}: reports in {out}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
