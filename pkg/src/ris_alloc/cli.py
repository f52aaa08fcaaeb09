"""Command-line front end: run experiments from a config file, emit CSV."""

import argparse
import sys
from dataclasses import replace

from .harness import EXPERIMENTS, read_config, run_experiment, write_results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-alloc",
        description="Monte-Carlo experiments for RIS-assisted network allocation")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment described by a config file")
    run.add_argument("--config", required=True, help="flat key=value config file")
    run.add_argument("--out", help="output CSV path (overrides config)")
    run.add_argument("--trials", type=int, help="trial count (overrides config)")
    run.add_argument("--seed", type=int, help="base RNG seed (overrides config)")
    run.add_argument("--workers", type=int, help="parallel trial workers")
    run.add_argument("--paper-scale", action="store_true",
                     help="use the 64-antenna / 64-element / 20-user setup")

    sub.add_parser("list-experiments", help="print the available experiment ids")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(name)
        return 0

    try:
        cfg = read_config(args.config)
        overrides = {}
        for key in ("out", "trials", "seed", "workers"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        if args.paper_scale:
            overrides["paper_scale"] = True
        cfg = replace(cfg, **overrides)
        table = run_experiment(cfg)
        write_results(table, cfg.out)
    except (ValueError, OSError) as exc:
        print(f"ris-alloc: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(table.rows)} rows to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
