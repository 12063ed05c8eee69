"""Command-line front end.

    consensuslab <command> [--config file.ini] [--seed N] [--out DIR]
                           [--workers N] [--set section.key=value ...]

Commands: and-paths, and-mse, and-tradeoff, anc-optimize, anc-tradeoff,
anc-tightness, graph-info.  Values come from per-study defaults, then the
config file, then ``--set`` overrides (``--seed/--out/--workers`` are
shorthands).  Exit codes: 0 success, 2 configuration error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

from ._version import __version__
from .config import EXPERIMENTS, load_config
from .errors import ConfigError, DivergenceError
from .experiments import COMMANDS, cmd_anc_tightness


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensuslab",
        description="Noisy-consensus experiment runner (CSV/JSON out).",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", help="INI config file", default=None)
        p.add_argument("--seed", type=int, help="master seed (u64)", default=None)
        p.add_argument("--out", help="output directory", default=None)
        p.add_argument("--workers", type=int, help="process count", default=None)
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override any config key (repeatable)",
        )
    return parser


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.overrides:
        dotted, sep, value = item.partition("=")
        if not sep or "." not in dotted:
            raise ConfigError(
                f"--set expects SECTION.KEY=VALUE, got {item!r}"
            )
        overrides[dotted.strip()] = value.strip()
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.out is not None:
        overrides["experiment.out"] = args.out
    if args.workers is not None:
        overrides["experiment.workers"] = str(args.workers)
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, _collect_overrides(args))
        if args.command == "graph-info":
            table = COMMANDS[args.command](cfg)
            (nodes, edges, lam2, lam_n, ab) = table.rows[0]
            print(f"nodes          {nodes}")
            print(f"edges          {edges}")
            print(f"lam2           {lam2:.10g}")
            print(f"lam_max        {lam_n:.10g}")
            print(f"alpha_bullet   {ab:.10g}")
            if cfg.out and os.path.isdir(cfg.out):
                path = os.path.join(cfg.out, "graph_info.csv")
                table.write_csv(path)
                print(f"wrote {path}")
            return 0
        os.makedirs(cfg.out, exist_ok=True)
        stem = args.command.replace("-", "_")
        if args.command == "anc-tightness":
            reports = []
            table = cmd_anc_tightness(cfg, reports)
            for k, report in enumerate(reports):
                jpath = os.path.join(cfg.out, f"{stem}_eps{k}.json")
                report.write_json(jpath)
                print(f"wrote {jpath}")
        else:
            table = COMMANDS[args.command](cfg)
        path = os.path.join(cfg.out, f"{stem}.csv")
        table.write_csv(path)
        print(f"wrote {path} ({len(table.rows)} rows)")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
