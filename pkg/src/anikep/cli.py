"""Command-line front end for scenario pipelines.

Usage: ``anikep <subcommand> --config scenario.json [--out DIR] [--jobs N]``
with subcommands flow, equilibria, chart, minimize, verify, convergence.

Exit codes: 0 success; 2 validation failure (bad config or CLI usage);
3 verification failure (a verify run with pass rate below 100%);
4 numerical non-convergence inside a pipeline.
"""

import argparse
import json
import sys

from .scenarios import SUBCOMMANDS, ConfigError, load_config, run_scenario

_HELP = {
    "flow": "integrate an orbit from a stable-set chart point to the equilibrium",
    "equilibria": "tabulate collision-manifold equilibria with eigen-data",
    "chart": "build the local stable-set chart and export its samples",
    "minimize": "minimize the collision arc from the scenario's center point",
    "verify": "run both correspondence inclusions over the cone grid",
    "convergence": "minimizer convergence along a dyadic point sequence",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anikep",
        description="Scenario pipelines for regularized collision dynamics "
        "and variational collision arcs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument(
            "--jobs", type=int, default=1,
            help="parallel workers for grid tasks (verify only; default 1)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, out_override=args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print(f"error: --jobs must be >= 1, got {args.jobs}", file=sys.stderr)
        return 2
    try:
        report = run_scenario(config, args.command, jobs=args.jobs)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    if report is not None:
        agg = report.aggregates
        print(json.dumps(agg, sort_keys=True))
        if not agg["overall_pass"]:
            print(
                f"verification failed: grid pass rate {agg['pass_rate']:.4f}, "
                f"subset pass rate {agg['subset_pass_rate']:.4f}",
                file=sys.stderr,
            )
            return 3
    print(f"wrote {config.out_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
