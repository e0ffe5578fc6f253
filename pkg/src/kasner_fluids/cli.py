"""Command line entry point: ``kasner-fluids <experiment> [--config FILE] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .cli_runner import EXIT_TOOL, EXPERIMENTS, ConfigError, load_config, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kasner-fluids",
        description="Singular initial value problems for relativistic fluids on Kasner backgrounds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True)
    helps = {
        "sivp": "solve the singular initial value problem for configured asymptotic data",
        "stability": "perturb a singular solution, extract its limit and solve the round trip",
        "oracle": "run one of the ODE oracles (model, q, homogeneous)",
        "check": "evaluate the parameter regime and the kappa condition (no evolution)",
        "lot": "build the leading-order terms and fit their difference rates",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--workers", type=int, help="number of concurrent runs")
        p.add_argument("--seed", type=int, help="random seed")
        if name == "oracle":
            p.add_argument("--case", choices=("model", "q", "homogeneous"), help="oracle case")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        problems = exc.problems if isinstance(exc, ConfigError) else [str(exc)]
        for msg in problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_TOOL
    overrides = {"experiment": args.experiment}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "case", None):
        overrides["oracle.case"] = args.case
    cfg = cfg.with_overrides(**overrides)
    report = run(cfg, args.out)
    summary = {"experiment": report.experiment, "checks": report.checks, "exit_code": report.exit_code}
    if report.diagnostic:
        summary["diagnostic"] = report.diagnostic
    print(json.dumps(summary, indent=2, default=str))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
