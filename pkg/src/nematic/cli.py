"""Command line front end.

    nematic run CONFIG [--output-dir DIR]
    nematic verify {operators,energy,picard,weakstrong,all}
    nematic scenario list
    nematic mms --refine K

Exit codes: 0 success, 2 config error, 3 solver divergence, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError
from .io import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, run
from .scenarios import DESCRIPTIONS, build_scenario, scenario_names


def _cmd_run(args) -> int:
    try:
        summary = run(args.config, args.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary.to_json(), end="")
    return summary.exit_status


def _cmd_verify(args) -> int:
    from .verify import run_suite
    checks = run_suite(args.suite)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def _cmd_scenario(args) -> int:
    for name in scenario_names():
        sc = build_scenario(name)
        print(f"{name:<14} {sc.dim}D n={sc.n} {sc.boundary:<9} {DESCRIPTIONS[name]}")
    return EXIT_OK


def _cmd_mms(args) -> int:
    from .mms import convergence_ladder
    study = convergence_ladder(args.refine)
    print(study.table())
    orders = study.orders("u")
    ok = all(args.min_order <= o <= args.max_order for o in orders)
    print("velocity orders:", " ".join(f"{o:.3f}" for o in orders), "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nematic", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured simulation")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None, help="override the config's output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=["operators", "energy", "picard", "weakstrong", "all"])
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("scenario", help="scenario utilities")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("mms", help="manufactured-solution convergence ladder")
    p.add_argument("--refine", type=int, default=3, help="number of grid levels (>= 2)")
    p.add_argument("--min-order", type=float, default=1.8)
    p.add_argument("--max-order", type=float, default=2.2)
    p.set_defaults(func=_cmd_mms)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mms" and args.refine < 2:
        parser.error("--refine needs at least 2 levels")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
