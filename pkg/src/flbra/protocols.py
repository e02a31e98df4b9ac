"""FLBRA setup/operation state machines and the RBF greedy baseline.

The base station's timed waits are modelled as synchronous discovery
rounds.  In each round every node that can be heard by an already
discovered node (or by the sink) becomes known, the fuzzy costs of all
links between known nodes are evaluated and routes are recomputed.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConsistencyError, SetupIncompleteError
from .fuzzy import FuzzyConfig, default_config, link_costs
from .topology import Link, NetworkGraph, RoutingTable, dijkstra_routes

log = logging.getLogger(__name__)

DEFAULT_CHECK_INTERVAL = 10
DEFAULT_COST_TOLERANCE = 1e-9


class Phase(enum.Enum):
    SETUP = "Setup"
    OPERATIONAL = "Operational"
    FAULTY = "Faulty"


@dataclass
class NetInfo:
    """What the base station has learned so far.

    ``reports`` maps a directed link ``(u, v)`` to the quality measured at
    ``v`` for transmissions from ``u``, for every ``v`` already discovered.
    """

    reports: dict = field(default_factory=dict)
    discovered: set[int] = field(default_factory=set)
    frontier: set[int] = field(default_factory=set)

    def known_links(self, sink: int) -> list[Link]:
        members = self.discovered | {sink}
        return sorted(k for k in self.reports if k[0] in members and k[1] in members)


class SetupResult(NamedTuple):
    table: RoutingTable
    net_info: NetInfo
    rounds: int
    path_info: dict


@dataclass
class ProtocolState:
    phase: Phase
    routing_table: RoutingTable
    net_info: NetInfo
    path_info: dict
    check_timer: int = DEFAULT_CHECK_INTERVAL


@dataclass(frozen=True)
class DeliveryOutcome:
    source: int
    delivered: bool
    hops: int
    path: tuple[int, ...]
    end_to_end_success: float

    @property
    def pep(self) -> float:
        return 1.0 - self.end_to_end_success


Trace = Callable[[str], None]


def _emit(trace: Trace | None, **fields):
    if trace is not None:
        trace(" ".join(f"{k}={v}" for k, v in fields.items()))


def _heard_by(g: NetworkGraph, listeners: set[int]) -> dict[Link, object]:
    out = {}
    for v in listeners:
        for u in g.in_neighbors(v):
            out[(u, v)] = g.qualities[(u, v)]
    return out


def _costs_for(links: Sequence[Link], g: NetworkGraph, cfg: FuzzyConfig) -> dict[Link, float]:
    if not links:
        return {}
    qs = [g.qualities[k] for k in links]
    values = link_costs([q.mean_rssi for q in qs], [q.rssi_stddev for q in qs],
                        [q.per for q in qs], cfg)
    return dict(zip(links, values.tolist()))


def flbra_setup(g: NetworkGraph, cfg: FuzzyConfig | None = None, round_budget: int | None = None,
                trace: Trace | None = None) -> SetupResult:
    """Run the discovery loop and build the routing table.

    Round 0 discovers the nodes the sink can hear.  Each following round
    queries the previous frontier, i.e. undiscovered nodes overheard by a
    discovered node.  Routes are recomputed after every round.  The
    returned round count is the number of rounds that discovered nodes.

    Raises :class:`SetupIncompleteError` if the frontier is still non-empty
    after ``round_budget`` rounds (default: one per sensor).
    """
    cfg = cfg if cfg is not None else default_config()
    budget = len(g.sensors) if round_budget is None else int(round_budget)
    sink = g.sink
    info = NetInfo()
    path_info: dict[Link, float] = {}
    table = RoutingTable(sink)

    newcomers = {u for u in g.in_neighbors(sink) if u != sink}
    rounds = 0
    while newcomers:
        if rounds >= budget:
            info.frontier = newcomers
            raise SetupIncompleteError(
                f"setup stopped after {rounds} rounds with {len(newcomers)} nodes pending",
                table=table, net_info=info, rounds=rounds,
            )
        info.discovered |= newcomers
        info.reports.update(_heard_by(g, newcomers | ({sink} if rounds == 0 else set())))
        known = info.known_links(sink)
        fresh = [k for k in known if k not in path_info]
        path_info.update(_costs_for(fresh, g, cfg))
        table = dijkstra_routes(g, path_info, nodes=info.discovered)
        rounds += 1
        newcomers = {u for (u, v) in info.reports if u not in info.discovered and u != sink}
        info.frontier = set(newcomers)
        _emit(trace, round=rounds, phase=Phase.SETUP.value, discovered=len(info.discovered),
              frontier=len(newcomers), routed=len(table.next_hop))
    info.frontier = set()
    table.unrouted |= set(g.sensors) - info.discovered
    return SetupResult(table, info, rounds, path_info)


def collect_reports(g: NetworkGraph, info: NetInfo) -> dict[Link, object]:
    """Fresh measurements reported by the sink and every discovered node."""
    return _heard_by(g, info.discovered | {g.sink})


def flbra_network_check(state: ProtocolState, g: NetworkGraph, cfg: FuzzyConfig | None = None,
                        tolerance: float = DEFAULT_COST_TOLERANCE) -> Phase:
    """Compare fresh measurements against the path info used for routing.

    FAULTY if an unknown sensor is now heard, if the set of usable links
    changed, or if any crisp cost moved by more than ``tolerance``.
    """
    cfg = cfg if cfg is not None else default_config()
    info = state.net_info
    reports = collect_reports(g, info)
    if any(u not in info.discovered and u != g.sink for (u, _) in reports):
        return Phase.FAULTY
    members = info.discovered | {g.sink}
    known = sorted(k for k in reports if k[0] in members and k[1] in members)
    if set(known) != set(state.path_info):
        return Phase.FAULTY
    fresh = _costs_for(known, g, cfg)
    for k, c in fresh.items():
        if abs(c - state.path_info[k]) > tolerance:
            return Phase.FAULTY
    return Phase.OPERATIONAL


class FlbraController:
    """The base station across both phases.

    :meth:`setup` runs the discovery phase; afterwards :meth:`tick` advances
    one operation round and performs a network check whenever the check
    timer expires, re-running setup when the check reports a fault.
    """

    def __init__(self, cfg: FuzzyConfig | None = None, check_interval: int = DEFAULT_CHECK_INTERVAL,
                 tolerance: float = DEFAULT_COST_TOLERANCE, round_budget: int | None = None,
                 trace: Trace | None = None):
        if check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        self.cfg = cfg if cfg is not None else default_config()
        self.check_interval = check_interval
        self.tolerance = tolerance
        self.round_budget = round_budget
        self.trace = trace
        self.state: ProtocolState | None = None
        self.round = 0
        self.checks = 0
        self.faults = 0
        self.route_changes = 0

    def setup(self, g: NetworkGraph) -> ProtocolState:
        res = flbra_setup(g, self.cfg, self.round_budget, self.trace)
        self.state = ProtocolState(Phase.OPERATIONAL, res.table, res.net_info, res.path_info,
                                   self.check_interval)
        return self.state

    def tick(self, g: NetworkGraph) -> Phase | None:
        """Advance one operation round; returns the check verdict if one ran."""
        if self.state is None:
            raise RuntimeError("setup() must run before the operation phase")
        self.round += 1
        self.state.check_timer -= 1
        if self.state.check_timer > 0:
            return None
        self.checks += 1
        verdict = flbra_network_check(self.state, g, self.cfg, self.tolerance)
        changed = 0
        if verdict is Phase.FAULTY:
            self.faults += 1
            self.state.phase = Phase.FAULTY
            before = dict(self.state.routing_table.next_hop)
            self.setup(g)
            after = self.state.routing_table.next_hop
            changed = sum(1 for n in set(before) | set(after) if before.get(n) != after.get(n))
            self.route_changes += changed
        self.state.check_timer = self.check_interval
        _emit(self.trace, round=self.round, phase=verdict.value,
              discovered=len(self.state.net_info.discovered), faults=self.faults,
              route_changes=changed)
        return verdict


def rbf_route(g: NetworkGraph, source: int) -> list[int]:
    """Greedy ascent on sink-beacon RSSI.

    From the current node, move to the reachable neighbour with the highest
    sink RSSI among those strictly stronger than the current node (ties go
    to the lower id).  When no neighbour improves, the packet goes straight
    to the sink if that link is reachable; otherwise the walk ends in a void.
    """
    sink = g.sink
    path = [source]
    current = source
    while current != sink:
        here = g.sink_rssi(current)
        best = None
        best_rssi = here
        for v in g.neighbors(current):
            if v == sink:
                continue
            r = g.sink_rssi(v)
            if r > best_rssi:  # neighbours are id-sorted, so ties keep the lower id
                best, best_rssi = v, r
        if best is None:
            if g.has_link(current, sink):
                path.append(sink)
            break
        path.append(best)
        current = best
    return path


def flbra_path(table: RoutingTable, source: int) -> list[int]:
    return list(table.full_path.get(source, [source]))


def evaluate_delivery(path: Sequence[int], g: NetworkGraph) -> DeliveryOutcome:
    """Analytic end-to-end success of ``path``: the product of ``1 - PER``."""
    if not path:
        raise ConsistencyError("empty path")
    success = 1.0
    for u, v in zip(path, path[1:]):
        if not g.has_link(u, v):
            raise ConsistencyError(f"path {list(path)} uses missing link {(u, v)}")
        success *= 1.0 - g.qualities[(u, v)].per
    delivered = path[-1] == g.sink and (len(path) > 1 or path[0] == g.sink)
    return DeliveryOutcome(
        source=path[0],
        delivered=delivered,
        hops=len(path) - 1,
        path=tuple(path),
        end_to_end_success=success if delivered else 0.0,
    )


def simulate_delivery(path: Sequence[int], g: NetworkGraph, packets: int,
                      rng: np.random.Generator) -> DeliveryOutcome:
    """Per-packet Bernoulli version of :func:`evaluate_delivery`.

    Each packet crosses each hop independently with probability ``1 - PER``;
    the reported success is the delivered fraction.
    """
    analytic = evaluate_delivery(path, g)
    if not analytic.delivered or analytic.hops == 0:
        return analytic
    keep = np.array([1.0 - g.qualities[(u, v)].per for u, v in zip(path, path[1:])])
    ok = (rng.random((packets, keep.size)) < keep).all(axis=1)
    return DeliveryOutcome(analytic.source, True, analytic.hops, analytic.path,
                           float(ok.mean()))


def count_voids(outcomes: Sequence[DeliveryOutcome]) -> int:
    return sum(1 for o in outcomes if not o.delivered)


def sink_reachable_from_all(g: NetworkGraph) -> bool:
    """True if every sensor has a directed path to the sink."""
    seen = {g.sink}
    stack = [g.sink]
    while stack:
        v = stack.pop()
        for u in g.in_neighbors(v):
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return all(n in seen for n in g.sensors)

