"""Command-line front-end: wavecontrol run | probe | compare."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import EXIT_CODES, compare, run

_EPILOG = """\
exit codes:
  0  converged / ok
  2  config parse error
  3  no convergence (inner HUM solve failed)
  4  stagnation
  5  diverged / blow-up guard
  6  iterate cap reached

WAVECONTROL_THREADS caps the probe's sample-level parallelism (default 1).
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavecontrol",
        description="Exact controls for the 1D semilinear wave equation "
                    "by least-squares / damped-Newton iteration.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config", epilog=_EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_run.add_argument("config", help="scenario file (key = value lines)")
    p_run.add_argument("--out", help="output directory (overrides the config)")
    p_run.add_argument("--dry-run", action="store_true",
                       help="validate and print the resolved scenario without computing")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")

    p_probe = sub.add_parser("probe", help="empirical observability probe")
    p_probe.add_argument("config")
    p_probe.add_argument("--out")
    p_probe.add_argument("--seed", type=int)

    p_cmp = sub.add_parser("compare", help="run several methods on one scenario")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--methods", default="ls,newton,picard",
                       help="comma-separated subset of ls,picard,newton,newton_alt")
    p_cmp.add_argument("--out")
    return parser


def _load(path: str, seed):
    scenario = parse_config(Path(path).read_text())
    if seed is not None:
        scenario = replace(scenario, seed=seed, warnings=list(scenario.warnings))
    for w in scenario.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return scenario


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = _load(args.config, getattr(args, "seed", None))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["parse_error"]
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES["parse_error"]

    if args.command == "run":
        if args.dry_run:
            for key, val in scenario.resolved_items():
                print(f"{key} = {val}")
            return 0
        result = run(scenario, out_dir=args.out)
    elif args.command == "probe":
        scenario = replace(scenario, method="probe", warnings=list(scenario.warnings))
        result = run(scenario, out_dir=args.out)
    else:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        bad = [m for m in methods if m not in ("ls", "picard", "newton", "newton_alt")]
        if bad:
            print(f"error: unknown methods {bad}", file=sys.stderr)
            return EXIT_CODES["parse_error"]
        result = compare(scenario, methods, out_dir=args.out)

    print(f"{result.outcome}: outputs in {result.out_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
