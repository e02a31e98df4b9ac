"""Link-quality generation: log-distance path loss with log-normal shadowing.

Each directed link gets ``samples_per_link`` RSSI readings drawn around the
deterministic path-loss value.  Their sample mean and (n-1) standard
deviation form the link's quality, together with a PER drawn uniformly
from a configured range.  Links whose mean falls below the radio
sensitivity are unreachable and carry PER 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, GeometryError, InvalidMeasurementError


@dataclass(frozen=True)
class PropagationParams:
    ref_rssi: float = -40.0
    ref_distance: float = 1.0
    path_loss_exp: float = 3.0
    shadow_sigma: float = 4.0
    sensitivity: float = -90.0
    samples_per_link: int = 30
    per_range: tuple[float, float] = (0.0, 0.3)

    def __post_init__(self):
        if not self.ref_distance > 0:
            raise ConfigError("ref_distance must be > 0")
        if not self.path_loss_exp > 0:
            raise ConfigError("path_loss_exp must be > 0")
        if not self.shadow_sigma >= 0:
            raise ConfigError("shadow_sigma must be >= 0")
        if int(self.samples_per_link) < 2:
            raise ConfigError("samples_per_link must be >= 2")
        lo, hi = (float(v) for v in self.per_range)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"per_range must satisfy 0 <= lo <= hi <= 1, got {(lo, hi)}")
        object.__setattr__(self, "per_range", (lo, hi))
        object.__setattr__(self, "samples_per_link", int(self.samples_per_link))

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "PropagationParams":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown propagation keys: {sorted(unknown)}")
        if "per_range" in data:
            data["per_range"] = tuple(data["per_range"])
        return cls(**data)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["per_range"] = list(self.per_range)
        return d


@dataclass(frozen=True, slots=True)
class LinkQuality:
    mean_rssi: float
    rssi_stddev: float
    per: float
    reachable: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.mean_rssi) and math.isfinite(self.rssi_stddev)
                and math.isfinite(self.per)):
            raise InvalidMeasurementError(f"non-finite link quality {self}")
        if self.rssi_stddev < 0:
            raise InvalidMeasurementError("rssi_stddev must be >= 0")
        if not 0.0 <= self.per <= 1.0:
            raise InvalidMeasurementError(f"per must lie in [0, 1], got {self.per}")


@dataclass(frozen=True)
class RandomSource:
    """Seed plus stream key; the same pair always yields the same draws.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys,
    so sibling streams are statistically independent and no stream depends
    on the order in which others were consumed.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        object.__setattr__(self, "stream", tuple(int(k) for k in self.stream))

    def child(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(key))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.stream)))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RandomSource or numpy Generator, got {type(rng).__name__}")


def rssi_at_distance(p: PropagationParams, d):
    """Deterministic received power in dBm at distance ``d`` metres."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise GeometryError(f"distance must be > 0, got {d}")
    out = p.ref_rssi - 10.0 * p.path_loss_exp * np.log10(d_arr / p.ref_distance)
    return float(out) if out.ndim == 0 else out


def qualities_from_draws(p: PropagationParams, base_rssi, normals, uniforms):
    """Turn raw standard-normal/uniform draws into quality arrays.

    ``normals`` has shape ``(n_links, samples_per_link)`` and ``uniforms``
    shape ``(n_links,)``.  Returns ``(mean, stddev, per, reachable)``.
    """
    # statistics of the shadowing term alone: the constant offset adds no spread
    noise = p.shadow_sigma * np.asarray(normals, dtype=float)
    mean = np.asarray(base_rssi, dtype=float) + noise.mean(axis=1)
    std = noise.std(axis=1, ddof=1)
    lo, hi = p.per_range
    per = lo + (hi - lo) * uniforms
    reachable = mean >= p.sensitivity
    per = np.where(reachable, per, 1.0)
    return mean, std, per, reachable


def sample_links(p: PropagationParams, distances, rng) -> tuple[np.ndarray, ...]:
    """Sample qualities for many links from one stream.

    Row ``i`` of the draw block belongs to link ``i``; all normals are drawn
    before the PER uniforms, so row ``i`` depends only on the stream and the
    number of links.
    """
    distances = np.atleast_1d(np.asarray(distances, dtype=float))
    base = rssi_at_distance(p, distances)
    gen = _as_generator(rng)
    normals = gen.standard_normal((distances.shape[0], p.samples_per_link))
    uniforms = gen.random(distances.shape[0])
    return qualities_from_draws(p, np.atleast_1d(base), normals, uniforms)


def sample_link(p: PropagationParams, d: float, rng) -> LinkQuality:
    mean, std, per, reach = sample_links(p, [d], rng)
    return LinkQuality(float(mean[0]), float(std[0]), float(per[0]), bool(reach[0]))


@dataclass(frozen=True)
class DriftSpec:
    """Perturbation applied to link qualities between network checks.

    Fixed offsets are added first, then a uniform jitter in ``[-j, +j]`` per
    field when a random source is supplied.
    """

    rssi_db: float = 0.0
    stddev_db: float = 0.0
    per: float = 0.0
    rssi_jitter: float = 0.0
    stddev_jitter: float = 0.0
    per_jitter: float = 0.0

    def __post_init__(self):
        for name in ("rssi_jitter", "stddev_jitter", "per_jitter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def is_zero(self) -> bool:
        return all(getattr(self, f) == 0 for f in self.__dataclass_fields__)

    @property
    def has_jitter(self) -> bool:
        return bool(self.rssi_jitter or self.stddev_jitter or self.per_jitter)

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "DriftSpec":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown drift keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def drift(q: LinkQuality, delta: DriftSpec, rng=None, sensitivity: float = -90.0) -> LinkQuality:
    """Perturb ``q`` by ``delta``, clamp to valid ranges and recompute reachability."""
    d_rssi, d_std, d_per = delta.rssi_db, delta.stddev_db, delta.per
    if rng is not None and delta.has_jitter:
        u = _as_generator(rng).uniform(-1.0, 1.0, 3)
        d_rssi += delta.rssi_jitter * u[0]
        d_std += delta.stddev_jitter * u[1]
        d_per += delta.per_jitter * u[2]
    if d_rssi == 0 and d_std == 0 and d_per == 0:
        return q
    mean = q.mean_rssi + d_rssi
    reachable = mean >= sensitivity
    per = 1.0 if not reachable else min(max(q.per + d_per, 0.0), 1.0)
    return replace(q, mean_rssi=mean, rssi_stddev=max(q.rssi_stddev + d_std, 0.0),
                   per=per, reachable=reachable)
