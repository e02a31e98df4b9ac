import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flbra.errors import ConfigError, GeometryError, InvalidMeasurementError
from flbra.links import (
    DriftSpec,
    LinkQuality,
    PropagationParams,
    RandomSource,
    drift,
    rssi_at_distance,
    sample_link,
    sample_links,
)

P = PropagationParams()


class TestPathLoss:
    def test_reference_point(self):
        assert rssi_at_distance(P, 1.0) == -40.0

    def test_one_decade(self):
        assert rssi_at_distance(P, 10.0) == pytest.approx(-70.0, abs=1e-12)

    def test_three_metres(self):
        assert rssi_at_distance(P, 3.0) == pytest.approx(-40 - 30 * math.log10(3), abs=1e-9)
        assert rssi_at_distance(P, 3.0) == pytest.approx(-54.314, abs=5e-4)

    @pytest.mark.parametrize("d", [0.0, -1.0, math.nan])
    def test_bad_distance(self, d):
        with pytest.raises(GeometryError):
            rssi_at_distance(P, d)

    def test_vectorised(self):
        out = rssi_at_distance(P, np.array([1.0, 10.0, 100.0]))
        np.testing.assert_allclose(out, [-40, -70, -100])


class TestParams:
    @pytest.mark.parametrize("kw", [{"ref_distance": 0}, {"path_loss_exp": 0}, {"shadow_sigma": -1},
                                    {"samples_per_link": 1}, {"per_range": (0.5, 0.2)}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            PropagationParams(**kw)

    def test_round_trip(self):
        p = PropagationParams(shadow_sigma=2.5, per_range=(0.0, 0.1))
        assert PropagationParams.from_dict(p.to_dict()) == p


class TestLinkQuality:
    @pytest.mark.parametrize("args", [(-60, -1, 0.1), (-60, 1, 1.2), (math.nan, 1, 0.1)])
    def test_invalid(self, args):
        with pytest.raises(InvalidMeasurementError):
            LinkQuality(*args)


class TestSampling:
    def test_noise_free(self):
        p = PropagationParams(shadow_sigma=0.0)
        q = sample_link(p, 5.0, RandomSource(1))
        assert q.rssi_stddev == 0.0
        assert q.mean_rssi == pytest.approx(rssi_at_distance(p, 5.0), abs=1e-12)
        assert q.reachable

    def test_beyond_sensitivity(self):
        p = PropagationParams(shadow_sigma=0.0)
        q = sample_link(p, 100.0, RandomSource(1))
        assert not q.reachable
        assert q.per == 1.0

    def test_golden_triple(self):
        q = sample_link(P, 3.0, RandomSource(42, (0, 0)))
        assert q.reachable and q.per == 0.2993442390850829
        assert q.mean_rssi == pytest.approx(-52.86379590161888, abs=1e-12)
        assert q.rssi_stddev == pytest.approx(5.072385557592446, abs=1e-12)
        assert q == sample_link(P, 3.0, RandomSource(42, (0, 0)))

    def test_reproducible(self):
        a = sample_links(P, np.full(50, 4.0), RandomSource(9, (3, 1)))
        b = sample_links(P, np.full(50, 4.0), RandomSource(9, (3, 1)))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_streams_differ(self):
        a = sample_link(P, 4.0, RandomSource(9, (0, 0)))
        b = sample_link(P, 4.0, RandomSource(9, (0, 1)))
        assert a != b

    def test_stream_independent_of_consumption_order(self):
        first = RandomSource(5, (1, 2)).generator().random(4)
        RandomSource(5, (1, 3)).generator().random(1000)
        assert np.array_equal(first, RandomSource(5, (1, 2)).generator().random(4))

    def test_mean_converges_to_path_loss(self):
        n = 1000
        mean, _, _, _ = sample_links(P, np.full(n, 3.0), RandomSource(2024))
        tol = 3 * P.shadow_sigma / math.sqrt(P.samples_per_link * n)
        assert abs(mean.mean() - rssi_at_distance(P, 3.0)) < tol

    def test_stddev_estimator(self):
        _, std, _, _ = sample_links(P, np.full(1000, 3.0), RandomSource(77))
        assert np.all(std >= 0)
        assert std.mean() == pytest.approx(P.shadow_sigma, rel=0.2)

    def test_per_range(self):
        _, _, per, reach = sample_links(P, np.full(2000, 3.0), RandomSource(3))
        assert reach.all()
        assert per.min() >= 0.0 and per.max() <= 0.3

    def test_bad_rng_type(self):
        with pytest.raises(TypeError):
            sample_link(P, 3.0, 42)

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ConfigError):
            RandomSource(seed)


class TestDrift:
    Q = LinkQuality(-60.0, 2.0, 0.2)

    def test_zero_is_identity(self):
        assert drift(self.Q, DriftSpec()) is self.Q
        assert DriftSpec().is_zero

    def test_per_clamped(self):
        assert drift(self.Q, DriftSpec(per=0.9)).per == 1.0

    def test_falls_below_sensitivity(self):
        q = drift(LinkQuality(-80.0, 2.0, 0.2), DriftSpec(rssi_db=-20))
        assert not q.reachable and q.per == 1.0

    def test_stddev_clamped(self):
        assert drift(self.Q, DriftSpec(stddev_db=-5)).rssi_stddev == 0.0

    def test_negative_jitter_rejected(self):
        with pytest.raises(ConfigError):
            DriftSpec(per_jitter=-0.1)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            DriftSpec.from_dict({"gain": 1})

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-1, 1), st.integers(0, 2**32))
    def test_result_always_valid(self, dr, ds, dp, seed):
        spec = DriftSpec(dr, ds, dp, rssi_jitter=1.0, stddev_jitter=1.0, per_jitter=0.1)
        q = drift(self.Q, spec, RandomSource(seed))
        assert q.rssi_stddev >= 0 and 0 <= q.per <= 1
        assert q.reachable == (q.mean_rssi >= -90)
