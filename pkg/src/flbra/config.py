"""Run configuration and its YAML loader.

See ``docs/config.md`` for the file schema.  Every section is optional;
omitted values take the built-in defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .fuzzy import FuzzyConfig
from .links import DriftSpec, PropagationParams
from .protocols import DEFAULT_CHECK_INTERVAL, DEFAULT_COST_TOLERANCE
from .topology import SCENARIOS_BY_NAME, TABLE2_SCENARIOS, Scenario

TOP_LEVEL_KEYS = {
    "seed", "iterations", "output", "trace", "workers", "scenarios",
    "propagation", "fuzzy", "protocol", "delivery", "drift", "dump_iterations",
}


@dataclass(frozen=True)
class RunConfig:
    scenarios: tuple[Scenario, ...] = TABLE2_SCENARIOS
    iterations: int = 100
    master_seed: int = 42
    propagation: PropagationParams = field(default_factory=PropagationParams)
    fuzzy: FuzzyConfig = field(default_factory=FuzzyConfig.default)
    drift: DriftSpec | None = None
    drift_rounds: int = 100
    check_interval: int = DEFAULT_CHECK_INTERVAL
    cost_tolerance: float = DEFAULT_COST_TOLERANCE
    round_budget: int | None = None
    monte_carlo_delivery: bool = False
    packets: int = 1000
    output_dir: Path = Path("results")
    trace: bool = False
    workers: int = 1
    dump_iterations: tuple[int, ...] = ()

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.scenarios:
            raise ConfigError("scenario list is empty")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate scenario names: {names}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.check_interval < 1:
            raise ConfigError("protocol.check_interval must be >= 1")
        if self.cost_tolerance < 0:
            raise ConfigError("protocol.cost_tolerance must be >= 0")
        if self.packets < 1:
            raise ConfigError("delivery.packets must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.drift_rounds < 1:
            raise ConfigError("drift.rounds must be >= 1")

    def scenario(self, name: str) -> Scenario:
        for s in self.scenarios:
            if s.name == name:
                return s
        if name in SCENARIOS_BY_NAME:
            return SCENARIOS_BY_NAME[name]
        raise ConfigError(f"unknown scenario {name!r}")

    def with_overrides(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        drift = dict(rounds=self.drift_rounds)
        if self.drift is not None:
            drift.update({k: getattr(self.drift, k) for k in self.drift.__dataclass_fields__})
        return {
            "seed": self.master_seed,
            "iterations": self.iterations,
            "output": str(self.output_dir),
            "trace": self.trace,
            "workers": self.workers,
            "dump_iterations": list(self.dump_iterations),
            "scenarios": [
                {"name": s.name, "node_count": s.node_count, "area": s.area, "spacing": s.spacing}
                for s in self.scenarios
            ],
            "propagation": self.propagation.to_dict(),
            "fuzzy": self.fuzzy.to_dict(),
            "protocol": {
                "check_interval": self.check_interval,
                "cost_tolerance": self.cost_tolerance,
                "round_budget": self.round_budget,
            },
            "delivery": {"monte_carlo": self.monte_carlo_delivery, "packets": self.packets},
            "drift": drift,
        }


def _scenarios(raw) -> tuple[Scenario, ...]:
    out = []
    for item in raw:
        if isinstance(item, str):
            if item not in SCENARIOS_BY_NAME:
                raise ConfigError(f"unknown scenario {item!r}; define it with node_count and area")
            out.append(SCENARIOS_BY_NAME[item])
        elif isinstance(item, Mapping):
            out.append(Scenario.from_dict(item))
        else:
            raise ConfigError(f"bad scenario entry: {item!r}")
    return tuple(out)


def _section(data: Mapping, key: str, allowed: set[str]) -> dict:
    sec = data.get(key) or {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"section {key!r} must be a mapping")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return dict(sec)


def config_from_dict(data: Mapping[str, Any] | None) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    protocol = _section(data, "protocol", {"check_interval", "cost_tolerance", "round_budget"})
    delivery = _section(data, "delivery", {"monte_carlo", "packets"})
    drift = _section(data, "drift", {"rounds", *DriftSpec.__dataclass_fields__})
    drift_rounds = int(drift.pop("rounds", 100))
    kwargs: dict[str, Any] = {
        "propagation": PropagationParams.from_dict(data.get("propagation")),
        "fuzzy": FuzzyConfig.from_dict(data.get("fuzzy")),
        "drift": DriftSpec.from_dict(drift) if drift else None,
        "drift_rounds": drift_rounds,
    }
    if "scenarios" in data:
        kwargs["scenarios"] = _scenarios(data["scenarios"])
    if "iterations" in data:
        kwargs["iterations"] = int(data["iterations"])
    if "seed" in data:
        kwargs["master_seed"] = int(data["seed"])
    if "output" in data:
        kwargs["output_dir"] = Path(data["output"])
    if "trace" in data:
        kwargs["trace"] = bool(data["trace"])
    if "workers" in data:
        kwargs["workers"] = int(data["workers"])
    if "dump_iterations" in data:
        kwargs["dump_iterations"] = tuple(int(i) for i in data["dump_iterations"])
    if "check_interval" in protocol:
        kwargs["check_interval"] = int(protocol["check_interval"])
    if "cost_tolerance" in protocol:
        kwargs["cost_tolerance"] = float(protocol["cost_tolerance"])
    if protocol.get("round_budget") is not None:
        kwargs["round_budget"] = int(protocol["round_budget"])
    if "monte_carlo" in delivery:
        kwargs["monte_carlo_delivery"] = bool(delivery["monte_carlo"])
    if "packets" in delivery:
        kwargs["packets"] = int(delivery["packets"])
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
