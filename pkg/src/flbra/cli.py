"""Command-line entry point: ``flbra-sim {run,drift,dump-graph,validate-config}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig, dump_config, load_config
from .errors import FlbraError
from .sim import format_summary, run_drift, run_suite, dump_graph

log = logging.getLogger("flbra")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flbra-sim",
        description="Fuzzy-cost vs RSSI-greedy routing in indoor sensor networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the scenario suite for both protocols")
    _common(run)
    run.add_argument("--iterations", type=int)
    run.add_argument("--scenario", action="append", metavar="NAME",
                     help="restrict to this scenario (repeatable)")
    run.add_argument("--trace", action="store_true", help="write per-scenario protocol traces")
    run.add_argument("--monte-carlo-delivery", action="store_true",
                     help="per-packet Bernoulli delivery instead of the analytic product")
    run.add_argument("--workers", type=int, help="parallel worker processes")

    drift = sub.add_parser("drift", help="operation phase with periodic network checks under drift")
    _common(drift)
    drift.add_argument("--scenario", default="S01", metavar="NAME")
    drift.add_argument("--rounds", type=int)
    drift.add_argument("--trace", action="store_true")

    dump = sub.add_parser("dump-graph", help="edge list of one seeded graph")
    _common(dump)
    dump.add_argument("--scenario", default="S01", metavar="NAME")
    dump.add_argument("--iteration", type=int, default=0)

    val = sub.add_parser("validate-config", help="load a config and print it fully resolved")
    val.add_argument("--config", type=Path, required=True)
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        master_seed=getattr(args, "seed", None),
        output_dir=getattr(args, "out", None),
    )


def cmd_run(args) -> int:
    cfg = _load(args)
    scenarios = tuple(cfg.scenario(n) for n in args.scenario) if args.scenario else None
    cfg = cfg.with_overrides(
        iterations=args.iterations,
        scenarios=scenarios,
        trace=True if args.trace else None,
        monte_carlo_delivery=True if args.monte_carlo_delivery else None,
        workers=args.workers,
    )
    out = run_suite(cfg)
    print(format_summary(out.results))
    print(f"\nwrote {cfg.output_dir}/summary.csv and {cfg.output_dir}/iterations.csv")
    return 0


def cmd_drift(args) -> int:
    cfg = _load(args)
    s = cfg.scenario(args.scenario)
    table, trace = run_drift(cfg, s, args.rounds)
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / f"drift_{s.name}.csv").write_text(table, encoding="utf-8")
    if args.trace:
        (root / f"drift_trace_{s.name}.log").write_text("".join(t + "\n" for t in trace),
                                                       encoding="utf-8")
    last = table.strip().splitlines()[-1].split(",")
    print(f"{s.name}: {last[0]} rounds, {last[2]} faults, {last[3]} route changes")
    print(f"wrote {root / f'drift_{s.name}.csv'}")
    return 0


def cmd_dump(args) -> int:
    cfg = _load(args)
    text = dump_graph(cfg, cfg.scenario(args.scenario), args.iteration)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / f"graph_{args.scenario}_iter{args.iteration}.csv"
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(dump_config(cfg))
    return 0


COMMANDS = {
    "run": cmd_run,
    "drift": cmd_drift,
    "dump-graph": cmd_dump,
    "validate-config": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FlbraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
