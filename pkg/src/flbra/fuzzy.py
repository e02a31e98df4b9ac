"""Mamdani link-cost engine.

A link is described by its mean RSSI, the standard deviation of the RSSI
readings and its packet error rate.  Each value is fuzzified against three
piecewise-linear sets, the eleven-row rule base fires with ``min`` as AND,
consequents are clipped and aggregated with ``max``, and the aggregated Cost
membership is reduced to a crisp value by its centre of area.

Everything here is a pure function of its arguments.  The batch entry point
:func:`link_costs` and the scalar :func:`link_cost` share one code path, so a
given measurement triple always produces the same bits either way.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InvalidMeasurementError

log = logging.getLogger(__name__)

RSSI = "RSSI"
STDDEV = "StdDev"
PER = "PER"
COST = "Cost"

INPUT_NAMES = (RSSI, STDDEV, PER)
EXPECTED_LABELS = {
    RSSI: ("Weak", "Average", "Strong"),
    STDDEV: ("Good", "Average", "Bad"),
    PER: ("Low", "Medium", "High"),
    COST: ("Low", "Medium", "High"),
}

DEFAULT_RESOLUTION = 1001
# rows processed per numpy block in link_costs; bounds memory at ~16 MB
_CHUNK = 2048


@dataclass(frozen=True)
class MembershipFunction:
    """Piecewise-linear fuzzy set given by ``(x, degree)`` breakpoints.

    Outside the breakpoint span the degree of the nearest endpoint is held,
    which gives the usual shoulder sets for free.
    """

    label: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise ConfigError(f"membership function {self.label!r} has no breakpoints")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError(f"breakpoints of {self.label!r} must be strictly increasing: {xs}")
        if any(not (0.0 <= y <= 1.0) or not math.isfinite(x) for x, y in pts):
            raise ConfigError(f"degrees of {self.label!r} must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    @classmethod
    def trapezoid(cls, label: str, a: float, b: float, c: float, d: float) -> "MembershipFunction":
        """Build from the usual ``(a, b, c, d)`` feet/shoulders notation.

        ``a == b`` gives a left shoulder, ``c == d`` a right shoulder and
        ``b == c`` a triangle.
        """
        if not a <= b <= c <= d:
            raise ConfigError(f"trapezoid {label!r} needs a <= b <= c <= d, got {(a, b, c, d)}")
        pts = []
        if a < b:
            pts.append((a, 0.0))
        pts.append((b, 1.0))
        if c > b:
            pts.append((c, 1.0))
        if d > c:
            pts.append((d, 0.0))
        return cls(label, tuple(pts))

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def degrees(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def __call__(self, x):
        return membership_degree(self, x)


def membership_degree(mf: MembershipFunction, x):
    """Degree of ``x`` in ``mf``; accepts scalars or arrays."""
    out = np.interp(x, mf.xs, mf.degrees)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    universe: tuple[float, float]
    sets: tuple[MembershipFunction, ...]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.universe)
        if not hi > lo:
            raise ConfigError(f"universe of {self.name} must have lo < hi, got {(lo, hi)}")
        object.__setattr__(self, "universe", (lo, hi))
        object.__setattr__(self, "sets", tuple(self.sets))
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate set labels in {self.name}: {labels}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.sets)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigError(f"{self.name} has no set {label!r}") from None

    def clamp(self, x):
        lo, hi = self.universe
        return np.clip(x, lo, hi)

    def degree_matrix(self, x: np.ndarray) -> np.ndarray:
        """Shape ``(len(x), n_sets)`` membership degrees, after clamping."""
        xc = self.clamp(np.asarray(x, dtype=float))
        return np.stack([np.interp(xc, s.xs, s.degrees) for s in self.sets], axis=-1)

    def coverage_gaps(self, samples: int = 10_001) -> np.ndarray:
        """Points of the universe where no set has positive degree."""
        xs = np.linspace(*self.universe, samples)
        deg = self.degree_matrix(xs)
        return xs[deg.max(axis=1) <= 0.0]


@dataclass(frozen=True)
class FuzzyRule:
    """AND-combined antecedents implying one Cost set."""

    antecedents: tuple[tuple[str, str], ...]
    consequent: str

    def __str__(self):
        cond = " AND ".join(f"{v} is {s}" for v, s in self.antecedents)
        return f"IF {cond} THEN Cost is {self.consequent}"


def _rule(consequent, **ante):
    names = {"per": PER, "rssi": RSSI, "sd": STDDEV}
    return FuzzyRule(tuple((names[k], v) for k, v in ante.items()), consequent)


# The first two rows list the same PER term in all three columns and are
# read as single-antecedent rules.
TABLE1_RULES: tuple[FuzzyRule, ...] = (
    _rule("High", per="High"),
    _rule("High", per="Medium"),
    _rule("High", per="Low", rssi="Weak", sd="Bad"),
    _rule("Medium", per="Low", rssi="Weak", sd="Average"),
    _rule("Low", per="Low", rssi="Weak", sd="Good"),
    _rule("High", per="Low", rssi="Average", sd="Bad"),
    _rule("Medium", per="Low", rssi="Average", sd="Average"),
    _rule("Low", per="Low", rssi="Average", sd="Good"),
    _rule("High", per="Low", rssi="Strong", sd="Bad"),
    _rule("Low", per="Low", rssi="Strong", sd="Average"),
    _rule("Low", per="Low", rssi="Strong", sd="Good"),
)


DEFAULT_SETS = {
    RSSI: ((-90.0, -20.0), {
        "Weak": (-90, -90, -75, -60),
        "Average": (-75, -60, -50, -40),
        "Strong": (-50, -40, -20, -20),
    }),
    STDDEV: ((0.0, 10.0), {
        "Good": (0, 0, 1, 3),
        "Average": (1, 3, 5, 7),
        "Bad": (5, 7, 10, 10),
    }),
    # Low holds full degree until Medium saturates, and Medium until High
    # does; Medium and High both imply High Cost, so a crossover below 1.0
    # would lower the clip height and make cost non-monotone in PER.
    PER: ((0.0, 1.0), {
        "Low": (0, 0, 0.15, 0.25),
        "Medium": (0.05, 0.15, 0.5, 0.7),
        "High": (0.3, 0.5, 1, 1),
    }),
    COST: ((0.0, 1.0), {
        "Low": (0, 0, 0.2, 0.4),
        "Medium": (0.2, 0.4, 0.6, 0.8),
        "High": (0.6, 0.8, 1, 1),
    }),
}


@dataclass(frozen=True)
class FuzzyConfig:
    rssi: FuzzyVariable
    stddev: FuzzyVariable
    per: FuzzyVariable
    cost: FuzzyVariable
    rules: tuple[FuzzyRule, ...] = TABLE1_RULES
    resolution: int = DEFAULT_RESOLUTION
    _rule_index: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.resolution < 3:
            raise ConfigError("centroid resolution must be at least 3 samples")
        for expected, var in zip((RSSI, STDDEV, PER, COST), self.variables):
            if var.name != expected:
                raise ConfigError(f"expected variable {expected}, got {var.name}")
            if set(var.labels) != set(EXPECTED_LABELS[expected]):
                raise ConfigError(
                    f"{expected} sets must be {EXPECTED_LABELS[expected]}, got {var.labels}"
                )
        by_name = {v.name: v for v in self.variables}
        index = []
        for rule in self.rules:
            ante = tuple((INPUT_NAMES.index(v), by_name[v].index(lbl)) for v, lbl in rule.antecedents)
            index.append((ante, self.cost.index(rule.consequent)))
        object.__setattr__(self, "_rule_index", tuple(index))

    @property
    def variables(self) -> tuple[FuzzyVariable, ...]:
        return (self.rssi, self.stddev, self.per, self.cost)

    def variable(self, name: str) -> FuzzyVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @classmethod
    def default(cls) -> "FuzzyConfig":
        return cls.from_dict({})

    @classmethod
    def from_dict(cls, data: Mapping) -> "FuzzyConfig":
        """Build from the ``fuzzy`` section of a run config.

        Missing variables or sets fall back to the built-in defaults.  Each
        set is either a 4-tuple ``[a, b, c, d]`` or a list of ``[x, degree]``
        breakpoints.
        """
        data = dict(data or {})
        unknown = set(data) - {"rssi", "stddev", "per", "cost", "resolution"}
        if unknown:
            raise ConfigError(f"unknown fuzzy keys: {sorted(unknown)}")
        built = {}
        for key, name in (("rssi", RSSI), ("stddev", STDDEV), ("per", PER), ("cost", COST)):
            universe, sets = DEFAULT_SETS[name]
            section = data.get(key) or {}
            universe = tuple(section.get("universe", universe))
            merged = dict(sets)
            merged.update(section.get("sets") or {})
            mfs = []
            for label, spec in merged.items():
                spec = list(spec)
                if spec and isinstance(spec[0], (list, tuple)):
                    mfs.append(MembershipFunction(label, tuple(tuple(p) for p in spec)))
                elif len(spec) == 4:
                    mfs.append(MembershipFunction.trapezoid(label, *spec))
                else:
                    raise ConfigError(f"{name}.{label}: expected [a, b, c, d] or breakpoint list")
            built[key] = FuzzyVariable(name, universe, tuple(mfs))
        return cls(**built, resolution=int(data.get("resolution", DEFAULT_RESOLUTION)))

    def to_dict(self) -> dict:
        out = {"resolution": self.resolution}
        for key, var in zip(("rssi", "stddev", "per", "cost"), self.variables):
            out[key] = {
                "universe": list(var.universe),
                "sets": {s.label: [list(p) for p in s.points] for s in var.sets},
            }
        return out


@dataclass(frozen=True)
class AggregatedOutput:
    """Max of clipped Cost sets; callable as ``mu(x)``."""

    cost: FuzzyVariable
    heights: tuple[float, ...]  # clip height per Cost set, in cost.sets order
    strengths: tuple[float, ...] = ()  # per-rule firing strength

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        mu = np.zeros_like(x)
        for h, mf in zip(self.heights, self.cost.sets):
            if h > 0.0:
                mu = np.maximum(mu, np.minimum(h, np.interp(x, mf.xs, mf.degrees)))
        return float(mu) if mu.ndim == 0 else mu

    def height(self, label: str) -> float:
        return self.heights[self.cost.index(label)]


class _Diagnostics:
    def __init__(self):
        self._lock = threading.Lock()
        self.zero_area_fallbacks = 0

    def bump(self, n=1):
        with self._lock:
            self.zero_area_fallbacks += n


diagnostics = _Diagnostics()


def fuzzify(var: FuzzyVariable, x: float) -> dict[str, float]:
    """Map a crisp reading to ``{set label: degree}`` after clamping to the universe."""
    x = float(x)
    if not math.isfinite(x):
        raise InvalidMeasurementError(f"{var.name} reading must be finite, got {x}")
    xc = min(max(x, var.universe[0]), var.universe[1])
    return {s.label: membership_degree(s, xc) for s in var.sets}


def _fire(rule_index, degrees, n_out):
    """Clip heights per consequent from per-variable degree matrices.

    ``degrees`` is a tuple of ``(n, n_sets)`` arrays in INPUT_NAMES order.
    """
    n = degrees[0].shape[0]
    heights = np.zeros((n, n_out))
    strengths = np.empty((n, len(rule_index)))
    for r, (ante, cons) in enumerate(rule_index):
        s = np.ones(n)
        for var_i, set_i in ante:
            s = np.minimum(s, degrees[var_i][:, set_i])
        strengths[:, r] = s
        heights[:, cons] = np.maximum(heights[:, cons], s)
    return heights, strengths


def infer(
    rules: Sequence[FuzzyRule],
    inputs: Mapping[str, Mapping[str, float]],
    cost: FuzzyVariable | None = None,
) -> AggregatedOutput:
    """Fire ``rules`` on fuzzified inputs and aggregate the clipped consequents.

    ``inputs`` maps each input variable name to its ``{label: degree}``
    dict; labels absent from a dict count as degree 0.
    """
    cost = cost if cost is not None else _default_cost()
    strengths = []
    heights = [0.0] * len(cost.sets)
    for rule in rules:
        s = 1.0
        for var, label in rule.antecedents:
            if var not in inputs:
                raise KeyError(f"no fuzzified degrees for {var}")
            s = min(s, float(inputs[var].get(label, 0.0)))
        strengths.append(s)
        i = cost.index(rule.consequent)
        heights[i] = max(heights[i], s)
    return AggregatedOutput(cost, tuple(heights), tuple(strengths))


def _cost_grid(cost: FuzzyVariable, resolution: int):
    xs = np.linspace(cost.universe[0], cost.universe[1], resolution)
    sets = np.stack([np.interp(xs, s.xs, s.degrees) for s in cost.sets])
    return xs, sets


def _aggregate_rows(heights: np.ndarray, sets: np.ndarray) -> np.ndarray:
    # heights (n, k), sets (k, m) -> mu (n, m)
    mu = np.minimum(heights[:, :1], sets[0])
    tmp = np.empty_like(mu)
    for k in range(1, sets.shape[0]):
        np.minimum(heights[:, k:k + 1], sets[k], out=tmp)
        np.maximum(mu, tmp, out=mu)
    return mu


def _centroid_rows(mu: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Trapezoidal centre of area per row; NaN where the area is zero."""
    # uniform grid: the dx factor cancels between numerator and denominator
    w = np.ones(xs.shape[0])
    w[0] = w[-1] = 0.5
    area = mu @ w
    moment = mu @ (w * xs)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(area > 0.0, moment / area, np.nan)


CRISP_DECIMALS = 12


def _finish(values: np.ndarray, cost: FuzzyVariable) -> np.ndarray:
    empty = np.isnan(values)
    if empty.any():
        n = int(empty.sum())
        diagnostics.bump(n)
        log.debug("zero-area aggregation for %d link(s); using universe midpoint", n)
        values = np.where(empty, 0.5 * (cost.universe[0] + cost.universe[1]), values)
    return values


def defuzzify_centroid(aggregated: AggregatedOutput, resolution: int = DEFAULT_RESOLUTION) -> float:
    """Centre of area of ``aggregated`` over the Cost universe.

    Falls back to the universe midpoint when nothing fired.
    """
    xs, sets = _cost_grid(aggregated.cost, resolution)
    mu = _aggregate_rows(np.asarray([aggregated.heights], dtype=float), sets)
    return float(_finish(_centroid_rows(mu, xs), aggregated.cost)[0])


def link_costs(rssi, stddev, per, cfg: FuzzyConfig | None = None) -> np.ndarray:
    """Vectorised crisp cost for arrays of (mean RSSI, RSSI std, PER)."""
    cfg = cfg if cfg is not None else default_config()
    arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (rssi, stddev, per)]
    arrays = np.broadcast_arrays(*arrays)
    for name, a in zip(INPUT_NAMES, arrays):
        if not np.all(np.isfinite(a)):
            raise InvalidMeasurementError(f"{name} readings must be finite")
    p = arrays[2]
    if np.any((p < 0.0) | (p > 1.0)):
        raise InvalidMeasurementError("PER must lie in [0, 1]")
    xs, sets = _cost_grid(cfg.cost, cfg.resolution)
    n = p.shape[0]
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        sl = slice(start, start + _CHUNK)
        degrees = tuple(
            var.degree_matrix(a[sl]) for var, a in zip((cfg.rssi, cfg.stddev, cfg.per), arrays)
        )
        heights, _ = _fire(cfg._rule_index, degrees, len(cfg.cost.sets))
        out[sl] = _centroid_rows(_aggregate_rows(heights, sets), xs)
    # a 1e-12 grid hides last-bit noise (membership of inexact inputs, BLAS
    # summation order) so exactly flat regions of the cost surface stay flat
    return np.round(_finish(out, cfg.cost), CRISP_DECIMALS)


def link_cost(q, cfg: FuzzyConfig | None = None) -> float:
    """Crisp cost of one link.

    ``q`` is anything with ``mean_rssi``, ``rssi_stddev`` and ``per``
    attributes (normally a :class:`flbra.links.LinkQuality`), or a plain
    ``(rssi, stddev, per)`` triple.
    """
    if hasattr(q, "mean_rssi"):
        triple = (q.mean_rssi, q.rssi_stddev, q.per)
    else:
        triple = tuple(q)
    return float(link_costs(*([v] for v in triple), cfg=cfg)[0])


_DEFAULT: FuzzyConfig | None = None


def default_config() -> FuzzyConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = FuzzyConfig.default()
    return _DEFAULT


def _default_cost() -> FuzzyVariable:
    return default_config().cost


def fuzzify_all(cfg: FuzzyConfig, rssi: float, stddev: float, per: float) -> dict[str, dict[str, float]]:
    return {
        RSSI: fuzzify(cfg.rssi, rssi),
        STDDEV: fuzzify(cfg.stddev, stddev),
        PER: fuzzify(cfg.per, per),
    }


def explain(cfg: FuzzyConfig, rssi: float, stddev: float, per: float) -> Iterable[str]:
    """Human-readable firing trace, used by the CLI's verbose dump."""
    agg = infer(cfg.rules, fuzzify_all(cfg, rssi, stddev, per), cfg.cost)
    for rule, s in zip(cfg.rules, agg.strengths):
        if s > 0:
            yield f"{s:.3f}  {rule}"
    yield f"crisp = {defuzzify_centroid(agg, cfg.resolution):.6f}"
