"""Command-line entry point.

Exit codes: 0 on success, 2 for bad configs or data files, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .config import guiding_example, load_config
from .errors import InputError, NumericalError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment JSON (default: bundled guiding example)")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: from config)")
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countdisagg",
                                     description="Estimate trip-type sizes from passage counts.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("attendance", help="attendance tables at counters and a dense grid"))
    _add_common(sub.add_parser("simulate", help="simulate count datasets"))
    p = sub.add_parser("estimate", help="run EM on a counts file and build confidence regions")
    _add_common(p)
    p.add_argument("--counts", required=True, help="counts CSV")
    p.add_argument("--table", default=None, help="attendance CSV (default: computed from config)")
    p = sub.add_parser("consistency", help="estimates for a ladder of counter numbers")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=None)
    p = sub.add_parser("coverage", help="coverage of confidence ellipsoids over replicates")
    _add_common(p)
    p.add_argument("--replicates", type=int, default=None)
    _add_common(sub.add_parser("strategies", help="compare counter placement densities"))
    _add_common(sub.add_parser("pde-check", help="transport-equation residuals of the fluxes"))
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else guiding_example()
    out = args.out or cfg.output_dir
    cmd = args.command
    if cmd == "attendance":
        ex.cmd_attendance(cfg, args.seed, out)
    elif cmd == "simulate":
        ex.cmd_simulate(cfg, args.seed, out)
    elif cmd == "estimate":
        ex.cmd_estimate(cfg, args.counts, args.table, args.seed, out)
    elif cmd == "consistency":
        ex.cmd_consistency(cfg, args.seed, out, args.replicates)
    elif cmd == "coverage":
        res = ex.cmd_coverage(cfg, args.seed, out, args.replicates)
        print(f"coverage {res.rate:.4f} at level {res.level}")
    elif cmd == "strategies":
        _, ranking = ex.cmd_strategies(cfg, args.seed, out)
        print("ranking (smallest ellipsoid first): " + " ".join(ranking))
    elif cmd == "pde-check":
        _, dec = ex.cmd_pde_check(cfg, args.seed, out)
        print(f"max decomposition error {dec:.3e}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
