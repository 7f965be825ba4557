"""Command-line front end: ``topoquench run|sweep|verify <config>``."""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .errors import ConfigError
from .runner import EXIT_INADMISSIBLE, EXIT_OK, EXIT_OTHER, run, sweep


def _load(path, scenario=None):
    with open(path) as fh:
        text = fh.read()
    cfg = parse_config(text)
    if scenario is not None and cfg.scenario != scenario:
        raise ConfigError(f"'{scenario}' command needs scenario = {scenario}, got {cfg.scenario}",
                          key="scenario")
    return cfg


def _report(summary, out=None):
    out = sys.stderr if out is None else out
    status = "ok" if summary.ok else f"failed (exit {summary.exit_code})"
    print(f"{summary.scenario}: {status} in {summary.wall_clock:.2f} s", file=out)
    if summary.message:
        print(f"  {summary.message}", file=out)
    for key, value in summary.results.items():
        if value is not None:
            print(f"  {key} = {value}", file=out)


def _values(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="topoquench", description=__doc__)
    parser.add_argument("--workers", type=int, default=1,
                        help="threads over momentum points (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    p = sub.add_parser("sweep", help="repeat a scenario over grid sizes or time steps")
    p.add_argument("config")
    p.add_argument("--axis", choices=("grid", "dt"), required=True)
    p.add_argument("--values", type=_values, required=True,
                   help="comma-separated, strictly increasing")
    p = sub.add_parser("verify", help="symmetry and identity checks (scenario = verify)")
    p.add_argument("config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args.config, "verify" if args.command == "verify" else None)
    except (OSError, ConfigError) as exc:
        print(f"topoquench: {exc}", file=sys.stderr)
        return EXIT_OTHER

    if args.command in ("run", "verify"):
        summary = run(cfg, workers=args.workers)
        _report(summary)
        return summary.exit_code

    try:
        result = sweep(cfg, args.axis, args.values, workers=args.workers)
    except ValueError as exc:
        print(f"topoquench: {exc}", file=sys.stderr)
        return EXIT_OTHER
    for value, summary in zip(result.values, result.summaries):
        print(f"[{args.axis} = {value}]", file=sys.stderr)
        _report(summary)
    if args.axis == "grid":
        print(f"smallest constant admissible grid: {result.n_star}", file=sys.stderr)
        if result.n_star is None:
            return EXIT_INADMISSIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
