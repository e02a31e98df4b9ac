"""Evaluation quantities: success rates, the F comparison, hop statistics, CIs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ConsistencyError, StatisticsError
from .protocols import DeliveryOutcome

Z_975 = 1.959964


def pep(pers: Iterable[float]) -> float:
    """End-to-end packet error probability of a path with per-link ``pers``."""
    keep = 1.0
    for p in pers:
        keep *= 1.0 - p
    return 1.0 - keep


def success_rate(outcome: DeliveryOutcome) -> float:
    return outcome.end_to_end_success if outcome.delivered else 0.0


def f_parameter(s_flbra: Sequence[float], s_rbf: Sequence[float]) -> float:
    """Mean per-node difference in success rate; positive favours FLBRA."""
    if len(s_flbra) != len(s_rbf):
        raise ValueError(f"length mismatch: {len(s_flbra)} vs {len(s_rbf)}")
    if not s_flbra:
        raise ValueError("need at least one node")
    f = math.fsum(a - b for a, b in zip(s_flbra, s_rbf)) / len(s_flbra)
    if not -1.0 <= f <= 1.0:
        raise ConsistencyError(f"F = {f} outside [-1, 1]; success rates out of range?")
    return f


def confidence_interval(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """Normal-approximation interval ``(theta1, mean, theta2)``."""
    if level != 0.95:
        raise ValueError("only the 95% level is supported")
    n = len(values)
    if n < 2:
        raise StatisticsError(f"confidence interval needs >= 2 values, got {n}")
    lo, hi = min(values), max(values)
    mean = lo if lo == hi else math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    half = Z_975 * math.sqrt(var) / math.sqrt(n)
    return mean - half, mean, mean + half


@dataclass(frozen=True)
class HopStats:
    avg_hops: float  # NaN when nothing was delivered
    farthest_hops: int
    voids: int


def _hop_stats(outcomes: Sequence[DeliveryOutcome]) -> HopStats:
    return _stats_from_hops([o.hops if o.delivered else None for o in outcomes])


def hop_stats(outcomes: Mapping[str, Sequence[DeliveryOutcome]]) -> dict[str, HopStats]:
    """Average and farthest hop count per protocol, over delivered nodes only."""
    if not outcomes or any(len(v) == 0 for v in outcomes.values()):
        raise ValueError("hop_stats needs a non-empty outcome list per protocol")
    return {name: _hop_stats(v) for name, v in outcomes.items()}


@dataclass
class IterationRecord:
    iteration: int
    nodes: list[int]
    s_flbra: list[float]
    s_rbf: list[float]
    hops_flbra: list[int | None]
    hops_rbf: list[int | None]
    f: float = field(init=False)

    def __post_init__(self):
        self.f = f_parameter(self.s_flbra, self.s_rbf)

    def stats(self) -> dict[str, HopStats]:
        return {
            "flbra": _stats_from_hops(self.hops_flbra),
            "rbf": _stats_from_hops(self.hops_rbf),
        }


def _stats_from_hops(hops: Sequence[int | None]) -> HopStats:
    got = [h for h in hops if h is not None]
    voids = len(hops) - len(got)
    if not got:
        return HopStats(math.nan, 0, voids)
    return HopStats(sum(got) / len(got), max(got), voids)


def _nanmean(xs):
    xs = [x for x in xs if not math.isnan(x)]
    return math.fsum(xs) / len(xs) if xs else math.nan


@dataclass
class ScenarioResult:
    name: str
    iterations: list[IterationRecord]
    fm: float
    theta1: float | None
    theta2: float | None
    avg_hops: dict[str, float]
    farthest_hops: dict[str, float]
    voids: dict[str, int]

    @property
    def ci_available(self) -> bool:
        return self.theta1 is not None

    @property
    def f_values(self) -> list[float]:
        return [r.f for r in self.iterations]


def summarize(name: str, records: Sequence[IterationRecord]) -> ScenarioResult:
    """Aggregate iterations; hop figures are means of the per-iteration values.

    With a single iteration the interval is undefined and ``theta1``/``theta2``
    are left as ``None``.
    """
    if not records:
        raise ValueError(f"{name}: no iterations to summarise")
    fs = [r.f for r in records]
    try:
        theta1, fm, theta2 = confidence_interval(fs)
    except StatisticsError:
        theta1 = theta2 = None
        fm = fs[0]
    per_iter = [r.stats() for r in records]
    avg, far, voids = {}, {}, {}
    for proto in ("flbra", "rbf"):
        avg[proto] = _nanmean([s[proto].avg_hops for s in per_iter])
        far[proto] = math.fsum(s[proto].farthest_hops for s in per_iter) / len(per_iter)
        voids[proto] = sum(s[proto].voids for s in per_iter)
    return ScenarioResult(name, list(records), fm, theta1, theta2, avg, far, voids)
