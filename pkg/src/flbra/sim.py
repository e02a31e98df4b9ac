"""Scenario driver: one seeded graph per iteration, both protocols on it."""
from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .config import RunConfig
from .errors import ConsistencyError, SetupIncompleteError
from .fuzzy import link_costs
from .links import DriftSpec, RandomSource
from .metrics import IterationRecord, ScenarioResult, summarize
from .protocols import (
    FlbraController,
    evaluate_delivery,
    flbra_path,
    flbra_setup,
    rbf_route,
    simulate_delivery,
)
from .topology import NetworkGraph, Scenario, apply_drift, build_grid, populate_links, write_edge_list

log = logging.getLogger(__name__)

# third component of every stream key
GRAPH_STREAM, DELIVERY_STREAM, DRIFT_STREAM = 0, 1, 2

SUMMARY_HEADER = (
    "scenario,iterations,FM,theta1,theta2,avg_hops_flbra,avg_hops_rbf,"
    "farthest_flbra,farthest_rbf,void_count_rbf,note"
)
ITERATION_HEADER = "scenario,iteration,F,protocol,mean_success,avg_hops,farthest_hops,voids"


def iteration_source(cfg: RunConfig, s: Scenario, iteration: int, purpose: int) -> RandomSource:
    return RandomSource(cfg.master_seed, (s.stream_key, iteration, purpose))


def build_graph(s: Scenario, cfg: RunConfig, iteration: int) -> NetworkGraph:
    return populate_links(build_grid(s), cfg.propagation,
                          iteration_source(cfg, s, iteration, GRAPH_STREAM))


@dataclass
class IterationRun:
    record: IterationRecord
    trace: list[str] = field(default_factory=list)
    rounds: int = 0
    edge_list: str | None = None


def run_iteration(s: Scenario, cfg: RunConfig, iteration: int) -> IterationRun:
    """Build one graph and evaluate FLBRA and RBF on it."""
    g = build_graph(s, cfg, iteration)
    digest = g.checksum()
    trace: list[str] = []
    prefix = f"scenario={s.name} iteration={iteration} "
    tracer = (lambda line: trace.append(prefix + line)) if cfg.trace else None

    try:
        setup = flbra_setup(g, cfg.fuzzy, cfg.round_budget, tracer)
    except SetupIncompleteError as exc:
        raise SetupIncompleteError(f"{s.name} iteration {iteration}: {exc}", exc.table,
                                   exc.net_info, exc.rounds) from exc
    # RBF must see exactly the link qualities FLBRA saw
    if g.checksum() != digest:
        raise ConsistencyError(f"{s.name} iteration {iteration}: graph changed during FLBRA setup")
    rbf_paths = {n: rbf_route(g, n) for n in g.sensors}

    gen = iteration_source(cfg, s, iteration, DELIVERY_STREAM).generator() if cfg.monte_carlo_delivery else None
    nodes = g.sensors
    s_f, s_r, h_f, h_r = [], [], [], []
    for n in nodes:
        fp, rp = flbra_path(setup.table, n), rbf_paths[n]
        if gen is None:
            fo, ro = evaluate_delivery(fp, g), evaluate_delivery(rp, g)
        else:
            fo = simulate_delivery(fp, g, cfg.packets, gen)
            ro = simulate_delivery(rp, g, cfg.packets, gen)
        s_f.append(fo.end_to_end_success)
        s_r.append(ro.end_to_end_success)
        h_f.append(fo.hops if fo.delivered else None)
        h_r.append(ro.hops if ro.delivered else None)
    record = IterationRecord(iteration, nodes, s_f, s_r, h_f, h_r)

    edge_list = None
    if iteration in cfg.dump_iterations:
        buf = io.StringIO()
        write_edge_list(g, buf, setup.path_info)
        edge_list = buf.getvalue()
    return IterationRun(record, trace, setup.rounds, edge_list)


def _run_one(args):
    s, cfg, i = args
    return run_iteration(s, cfg, i)


def run_scenario(s: Scenario, cfg: RunConfig, pool: ProcessPoolExecutor | None = None):
    jobs = [(s, cfg, i) for i in range(cfg.iterations)]
    if pool is None:
        runs = [_run_one(j) for j in jobs]
    else:
        runs = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // 32)))
    return summarize(s.name, [r.record for r in runs]), runs


@dataclass
class SuiteOutput:
    results: list[ScenarioResult]
    traces: dict[str, list[str]]
    edge_lists: dict[str, dict[int, str]]


def run_suite(cfg: RunConfig, write: bool = True) -> SuiteOutput:
    """Run every scenario of ``cfg`` and (optionally) write the output files."""
    results, traces, dumps = [], {}, {}
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for s in cfg.scenarios:
            log.info("scenario %s: %d iterations", s.name, cfg.iterations)
            res, runs = run_scenario(s, cfg, pool)
            results.append(res)
            if cfg.trace:
                traces[s.name] = [line for r in runs for line in r.trace]
            dumps[s.name] = {r.record.iteration: r.edge_list for r in runs if r.edge_list is not None}
    finally:
        if pool is not None:
            pool.shutdown()
    out = SuiteOutput(results, traces, dumps)
    if write:
        emit_outputs(out, cfg)
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def summary_rows(results: Sequence[ScenarioResult]) -> list[str]:
    rows = []
    for r in results:
        note = "" if r.ci_available else "single iteration: no confidence interval"
        rows.append(",".join(_fmt(v) for v in (
            r.name, len(r.iterations), r.fm, r.theta1, r.theta2,
            r.avg_hops["flbra"], r.avg_hops["rbf"],
            r.farthest_hops["flbra"], r.farthest_hops["rbf"], r.voids["rbf"], note,
        )))
    return rows


def iteration_rows(results: Sequence[ScenarioResult]) -> list[str]:
    rows = []
    for r in results:
        for rec in r.iterations:
            stats = rec.stats()
            for proto, succ in (("flbra", rec.s_flbra), ("rbf", rec.s_rbf)):
                st = stats[proto]
                rows.append(",".join(_fmt(v) for v in (
                    r.name, rec.iteration, rec.f, proto, math.fsum(succ) / len(succ),
                    st.avg_hops, st.farthest_hops, st.voids,
                )))
    return rows


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_outputs(out: SuiteOutput, cfg: RunConfig) -> list[Path]:
    """Write ``summary.csv``, ``iterations.csv`` and optional traces/graph dumps."""
    if not out.results:
        raise ValueError("no scenario results to write")
    root = Path(cfg.output_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {root}: {exc.strerror}") from exc
    written = []
    summary = root / "summary.csv"
    _write(summary, "\n".join([SUMMARY_HEADER, *summary_rows(out.results)]) + "\n")
    written.append(summary)
    per_iter = root / "iterations.csv"
    _write(per_iter, "\n".join([ITERATION_HEADER, *iteration_rows(out.results)]) + "\n")
    written.append(per_iter)
    for name, lines in sorted(out.traces.items()):
        p = root / f"trace_{name}.log"
        _write(p, "".join(line + "\n" for line in lines))
        written.append(p)
    for name, dumps in sorted(out.edge_lists.items()):
        for it, text in sorted(dumps.items()):
            p = root / f"graph_{name}_iter{it}.csv"
            _write(p, text)
            written.append(p)
    return written


def format_summary(results: Sequence[ScenarioResult]) -> str:
    head = f"{'scenario':<9}{'FM':>9}{'theta1':>9}{'theta2':>9}{'hops F':>8}{'hops R':>8}{'far F':>7}{'far R':>7}{'voids':>7}"
    lines = [head]
    for r in results:
        t1 = f"{r.theta1:9.4f}" if r.ci_available else f"{'-':>9}"
        t2 = f"{r.theta2:9.4f}" if r.ci_available else f"{'-':>9}"
        lines.append(
            f"{r.name:<9}{r.fm:9.4f}{t1}{t2}{r.avg_hops['flbra']:8.3f}{r.avg_hops['rbf']:8.3f}"
            f"{r.farthest_hops['flbra']:7.2f}{r.farthest_hops['rbf']:7.2f}{r.voids['rbf']:7d}"
        )
    return "\n".join(lines)


def dump_graph(cfg: RunConfig, s: Scenario, iteration: int = 0) -> str:
    """Edge list of one seeded graph with the fuzzy cost of every reachable link."""
    g = build_graph(s, cfg, iteration)
    keys = sorted(g.links)
    qs = [g.qualities[k] for k in keys]
    costs = link_costs([q.mean_rssi for q in qs], [q.rssi_stddev for q in qs],
                       [q.per for q in qs], cfg.fuzzy) if qs else []
    buf = io.StringIO()
    write_edge_list(g, buf, dict(zip(keys, list(costs))))
    return buf.getvalue()


DRIFT_HEADER = "round,check,faults,route_changes,discovered,mean_success_flbra,voids_flbra"
DEFAULT_DRIFT = DriftSpec(rssi_jitter=0.5, per_jitter=0.01)


def run_drift(cfg: RunConfig, s: Scenario, rounds: int | None = None) -> tuple[str, list[str]]:
    """Operation phase under per-round drift on a single seeded graph.

    Returns the per-round CSV text and the protocol trace lines.
    """
    rounds = cfg.drift_rounds if rounds is None else rounds
    spec = cfg.drift if cfg.drift is not None else DEFAULT_DRIFT
    trace: list[str] = []
    ctl = FlbraController(cfg.fuzzy, cfg.check_interval, cfg.cost_tolerance, cfg.round_budget,
                          trace.append)
    g = build_graph(s, cfg, 0)
    ctl.setup(g)
    rows = [DRIFT_HEADER]
    for r in range(1, rounds + 1):
        g = apply_drift(g, spec, iteration_source(cfg, s, r, DRIFT_STREAM),
                        cfg.propagation.sensitivity)
        verdict = ctl.tick(g)
        table = ctl.state.routing_table
        outcomes = [evaluate_delivery(flbra_path(table, n), g) if _path_ok(flbra_path(table, n), g)
                    else None for n in g.sensors]
        succ = [o.end_to_end_success if o is not None else 0.0 for o in outcomes]
        voids = sum(1 for o in outcomes if o is None or not o.delivered)
        rows.append(",".join(_fmt(v) for v in (
            r, "" if verdict is None else verdict.value, ctl.faults, ctl.route_changes,
            len(ctl.state.net_info.discovered), math.fsum(succ) / len(succ), voids,
        )))
    return "\n".join(rows) + "\n", trace


def _path_ok(path, g: NetworkGraph) -> bool:
    # between checks the table may reference links drift has broken
    return all(g.has_link(u, v) for u, v in zip(path, path[1:]))
