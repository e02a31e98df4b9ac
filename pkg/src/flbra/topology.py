"""Grid scenarios, the directed network graph and Dijkstra routing to the sink."""
from __future__ import annotations

import hashlib
import heapq
import math
import zlib
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import ConfigError, ScenarioError
from .links import DriftSpec, LinkQuality, PropagationParams, sample_links

SINK = 0
GRID_SPACING = 3.0

Link = tuple[int, int]


@dataclass(frozen=True)
class Scenario:
    name: str
    node_count: int
    area: float
    spacing: float = GRID_SPACING

    def __post_init__(self):
        if int(self.node_count) <= 0:
            raise ScenarioError(f"{self.name}: node_count must be > 0")
        if not self.area > 0:
            raise ScenarioError(f"{self.name}: area must be > 0")
        if not self.spacing > 0:
            raise ScenarioError(f"{self.name}: spacing must be > 0")

    @property
    def side(self) -> float:
        return math.sqrt(self.area)

    @property
    def grid_points(self) -> int:
        """Points per grid row."""
        return int(math.floor(self.side / self.spacing + 1e-9)) + 1

    @property
    def stream_key(self) -> int:
        """Stable per-scenario stream component, independent of suite order."""
        return zlib.crc32(self.name.encode("utf-8"))

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        unknown = set(data) - {"name", "node_count", "area", "spacing"}
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(str(data["name"]), int(data["node_count"]), float(data["area"]),
                       float(data.get("spacing", GRID_SPACING)))
        except KeyError as exc:
            raise ConfigError(f"scenario is missing {exc.args[0]!r}") from None


TABLE2_SCENARIOS: tuple[Scenario, ...] = (
    Scenario("S01", 8, 36.0),
    Scenario("S02", 24, 144.0),
    Scenario("S03", 48, 324.0),
    Scenario("S04", 80, 576.0),
    Scenario("S05", 120, 900.0),
    Scenario("S06", 160, 1296.0),
)
SCENARIOS_BY_NAME = {s.name: s for s in TABLE2_SCENARIOS}


@dataclass
class NetworkGraph:
    """Directed radio graph with the sink as a distinguished node.

    ``qualities`` holds every sampled directed pair, reachable or not, so
    drift can bring a link back into range.  Neighbour sets and :attr:`links`
    only ever expose reachable links.
    """

    positions: dict[int, tuple[float, float]]
    sink: int = SINK
    qualities: dict[Link, LinkQuality] = field(default_factory=dict)
    costs: dict[Link, float] = field(default_factory=dict)
    _out: dict | None = field(default=None, init=False, repr=False, compare=False)
    _in: dict | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.sink not in self.positions:
            raise ScenarioError("sink has no position")
        seen = set()
        for node, pos in self.positions.items():
            pos = (float(pos[0]), float(pos[1]))
            if pos in seen:
                raise ScenarioError(f"node {node} shares position {pos} with another node")
            seen.add(pos)
            self.positions[node] = pos

    @property
    def nodes(self) -> list[int]:
        return sorted(self.positions)

    @property
    def sensors(self) -> list[int]:
        return [n for n in sorted(self.positions) if n != self.sink]

    @property
    def links(self) -> dict[Link, LinkQuality]:
        return {k: q for k, q in self.qualities.items() if q.reachable}

    def _index(self):
        if self._out is None:
            out = {n: [] for n in self.positions}
            inc = {n: [] for n in self.positions}
            for (u, v), q in sorted(self.qualities.items()):
                if q.reachable:
                    out[u].append(v)
                    inc[v].append(u)
            self._out, self._in = out, inc

    def _invalidate(self):
        self._out = self._in = None

    def neighbors(self, u: int) -> list[int]:
        """Nodes ``u`` can transmit to, sorted by id."""
        self._index()
        return self._out[u]

    def in_neighbors(self, v: int) -> list[int]:
        """Nodes that ``v`` can hear, sorted by id."""
        self._index()
        return self._in[v]

    def has_link(self, u: int, v: int) -> bool:
        q = self.qualities.get((u, v))
        return q is not None and q.reachable

    def sink_rssi(self, node: int) -> float:
        """RSSI of the sink's beacon at ``node``; ``-inf`` if never sampled."""
        q = self.qualities.get((self.sink, node))
        return q.mean_rssi if q is not None else -math.inf

    def distance(self, u: int, v: int) -> float:
        (x1, y1), (x2, y2) = self.positions[u], self.positions[v]
        return math.hypot(x2 - x1, y2 - y1)

    def set_link(self, u: int, v: int, q: LinkQuality):
        if u == v:
            raise ScenarioError("self-links are not allowed")
        if u not in self.positions or v not in self.positions:
            raise ScenarioError(f"link {(u, v)} references an unknown node")
        self.qualities[(u, v)] = q
        self.costs.pop((u, v), None)
        self._invalidate()

    def remove_link(self, u: int, v: int):
        self.qualities.pop((u, v), None)
        self.costs.pop((u, v), None)
        self._invalidate()

    def add_node(self, node: int, position: tuple[float, float]):
        if node in self.positions:
            raise ScenarioError(f"node {node} already exists")
        pos = (float(position[0]), float(position[1]))
        if pos in self.positions.values():
            raise ScenarioError(f"position {pos} already occupied")
        self.positions[node] = pos
        self._invalidate()

    def copy(self) -> "NetworkGraph":
        return NetworkGraph(dict(self.positions), self.sink, dict(self.qualities), dict(self.costs))

    def checksum(self) -> str:
        """Digest of positions and link qualities (costs excluded)."""
        h = hashlib.sha256()
        for n in self.nodes:
            h.update(np.array([n, *self.positions[n]], dtype=float).tobytes())
        keys = sorted(self.qualities)
        if keys:
            arr = np.array(
                [(u, v, q.mean_rssi, q.rssi_stddev, q.per, q.reachable)
                 for (u, v), q in ((k, self.qualities[k]) for k in keys)],
                dtype=float,
            )
            h.update(arr.tobytes())
        return h.hexdigest()


def build_grid(s: Scenario) -> NetworkGraph:
    """Lay out ``s`` on a square grid with the sink at the centre point.

    Sensors take the remaining points in row-major order and are numbered
    from 1; when the grid has more free points than sensors, the trailing
    points stay empty.
    """
    side = s.grid_points
    free = side * side - 1
    if side % 2 == 0:
        raise ScenarioError(f"{s.name}: a {side}x{side} grid has no centre point")
    if s.node_count > free:
        raise ScenarioError(f"{s.name}: {s.node_count} sensors do not fit a {side}x{side} grid")
    centre = (side // 2, side // 2)
    positions = {SINK: (centre[1] * s.spacing, centre[0] * s.spacing)}
    node = 1
    for row in range(side):
        for col in range(side):
            if (row, col) == centre:
                continue
            if node > s.node_count:
                break
            positions[node] = (col * s.spacing, row * s.spacing)
            node += 1
    return NetworkGraph(positions, SINK)


def ordered_pairs(g: NetworkGraph) -> list[Link]:
    """Directed node pairs in link-index order."""
    nodes = g.nodes
    return [(u, v) for u in nodes for v in nodes if u != v]


def populate_links(g: NetworkGraph, p: PropagationParams, rng) -> NetworkGraph:
    """Sample every ordered pair of ``g`` and return a new populated graph."""
    pairs = ordered_pairs(g)
    out = NetworkGraph(dict(g.positions), g.sink)
    if not pairs:
        return out
    pos = np.array([g.positions[n] for n in g.nodes])
    idx = {n: i for i, n in enumerate(g.nodes)}
    src = np.array([idx[u] for u, _ in pairs])
    dst = np.array([idx[v] for _, v in pairs])
    dist = np.hypot(*(pos[dst] - pos[src]).T)
    mean, std, per, reach = sample_links(p, dist, rng)
    out.qualities = {
        pair: LinkQuality(m, s, e, r)
        for pair, m, s, e, r in zip(pairs, mean.tolist(), std.tolist(), per.tolist(), reach.tolist())
    }
    return out


def apply_drift(g: NetworkGraph, delta: DriftSpec, rng=None, sensitivity: float = -90.0) -> NetworkGraph:
    """Graph-wide :func:`flbra.links.drift`, vectorised over all sampled links.

    Jitter for link ``i`` (in sorted link order) comes from row ``i`` of a
    single ``(n_links, 3)`` uniform block.
    """
    out = g.copy()
    out.costs = {}
    keys = sorted(g.qualities)
    if not keys or (delta.is_zero and rng is None):
        return out
    n = len(keys)
    offs = np.tile([delta.rssi_db, delta.stddev_db, delta.per], (n, 1))
    if rng is not None and delta.has_jitter:
        gen = rng.generator() if hasattr(rng, "generator") else rng
        u = gen.uniform(-1.0, 1.0, (n, 3))
        offs = offs + u * np.array([delta.rssi_jitter, delta.stddev_jitter, delta.per_jitter])
    qs = [g.qualities[k] for k in keys]
    mean = np.array([q.mean_rssi for q in qs]) + offs[:, 0]
    std = np.maximum(np.array([q.rssi_stddev for q in qs]) + offs[:, 1], 0.0)
    reach = mean >= sensitivity
    per = np.where(reach, np.clip(np.array([q.per for q in qs]) + offs[:, 2], 0.0, 1.0), 1.0)
    out.qualities = {
        k: LinkQuality(m, s, e, r)
        for k, m, s, e, r in zip(keys, mean.tolist(), std.tolist(), per.tolist(), reach.tolist())
    }
    return out


@dataclass
class RoutingTable:
    sink: int
    next_hop: dict[int, int] = field(default_factory=dict)
    path_cost: dict[int, float] = field(default_factory=dict)
    full_path: dict[int, list[int]] = field(default_factory=dict)
    unrouted: set[int] = field(default_factory=set)

    def hops(self, node: int) -> int | None:
        path = self.full_path.get(node)
        return None if path is None else len(path) - 1

    def routed(self) -> list[int]:
        return sorted(self.next_hop)

    def signature(self) -> tuple:
        return tuple(sorted(self.next_hop.items()))


def dijkstra_routes(g: NetworkGraph, costs: Mapping[Link, float] | None = None,
                    nodes: Iterable[int] | None = None) -> RoutingTable:
    """Minimum-cost route from every node to the sink.

    Only links that are both reachable in ``g`` and present in ``costs``
    are usable.  Equal-cost candidates are ordered by hop count and then by
    the id of the next hop, so the table is fully deterministic.
    ``nodes`` restricts the table to a subset (defaults to all sensors).
    """
    costs = g.costs if costs is None else costs
    sink = g.sink
    incoming: dict[int, list[tuple[int, float]]] = {}
    for (u, v), c in costs.items():
        if c < 0:
            raise ValueError(f"negative cost on link {(u, v)}")
        if g.has_link(u, v):
            incoming.setdefault(v, []).append((u, float(c)))

    # label = (cost, hops, next hop); smaller is better
    best: dict[int, tuple[float, int, int]] = {sink: (0.0, 0, sink)}
    done: set[int] = set()
    heap = [(0.0, 0, sink, sink)]
    while heap:
        c, h, nh, v = heapq.heappop(heap)
        if v in done or best[v] != (c, h, nh):
            continue
        done.add(v)
        for u, w in incoming.get(v, ()):
            if u in done or u == sink:
                continue
            cand = (c + w, h + 1, v)
            if u not in best or cand < best[u]:
                best[u] = cand
                heapq.heappush(heap, (*cand, u))

    table = RoutingTable(sink)
    wanted = g.sensors if nodes is None else sorted(set(nodes) - {sink})
    for node in wanted:
        if node not in best:
            table.unrouted.add(node)
            continue
        table.next_hop[node] = best[node][2]
    for node in table.next_hop:
        path = [node]
        while path[-1] != sink:
            path.append(best[path[-1]][2])
        table.full_path[node] = path
        # summed source-to-sink so it matches a plain walk along the path
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += costs[(a, b)]
        table.path_cost[node] = total
    return table


def write_edge_list(g: NetworkGraph, out: IO[str], costs: Mapping[Link, float] | None = None):
    """Reachable links as ``src,dst,mean_rssi,stddev,per,cost`` rows."""
    costs = g.costs if costs is None else costs
    out.write("src,dst,mean_rssi,stddev,per,cost\n")
    for (u, v), q in sorted(g.links.items()):
        c = costs.get((u, v))
        cost = "" if c is None else f"{c:.6f}"
        out.write(f"{u},{v},{q.mean_rssi:.4f},{q.rssi_stddev:.4f},{q.per:.6f},{cost}\n")
