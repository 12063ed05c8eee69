#!/usr/bin/env python3
"""Run every study end to end with the packaged configs.

Equivalent to invoking the CLI once per study:

    python3 scripts/reproduce_studies.py [--out DIR] [--seed N] [--fast]

``--fast`` shrinks run counts and iteration budgets so the whole sweep
finishes in well under a minute (useful as a smoke test); the default
settings reproduce the full tables.
"""

from __future__ import annotations

import argparse
import pathlib
import sys
import time

from consensuslab.cli import main as cli_main

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"

STUDIES = (
    "and-paths",
    "and-mse",
    "and-tradeoff",
    "anc-optimize",
    "anc-tradeoff",
    "anc-tightness",
)

FAST_OVERRIDES = {
    "and-paths": ["run.iterations=2000"],
    "and-mse": ["run.runs=5", "run.iterations=2000"],
    "and-tradeoff": ["run.runs=5", "run.iterations=2000"],
    "anc-optimize": [],
    "anc-tradeoff": [],
    "anc-tightness": [
        "anc.eps_grid=0.2,0.4",
        "anc.x0_samples=2",
        "anc.runs_per_x0=60",
    ],
}


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument(
        "--studies", nargs="+", choices=STUDIES, default=list(STUDIES),
        help="subset of studies to run",
    )
    parser.add_argument(
        "--fast", action="store_true",
        help="shrink budgets for a quick smoke run",
    )
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    for study in args.studies:
        config = CONFIG_DIR / f"{study.replace('-', '_')}.ini"
        argv = [study, "--config", str(config), "--out", args.out]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        if args.fast:
            for override in FAST_OVERRIDES[study]:
                argv += ["--set", override]
        print(f"== {study}", flush=True)
        t0 = time.perf_counter()
        rc = cli_main(argv)
        print(f"   done in {time.perf_counter() - t0:.1f}s (exit {rc})", flush=True)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
