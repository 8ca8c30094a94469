import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from affectrec.engine import ContractError
from affectrec.objectives import ccc
from affectrec.postprocess import (
    ChainConfig,
    apply_chain,
    centre,
    chain_search,
    geometric_grid,
    median_filter,
    scale,
    search_dimension,
    time_shift,
)


def median_oracle(x, w):
    h = w // 2
    padded = [x[0]] * h + list(x) + [x[-1]] * h
    return np.array([np.median(padded[i : i + w]) for i in range(len(x))])


def smooth_gold(n, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return np.sin(t / 25 + rng.uniform(0, 6)) * 0.5 + 0.2 * np.sin(t / 7)


class TestOperators:
    def test_median_identity(self):
        x = np.random.default_rng(0).normal(size=9)
        np.testing.assert_array_equal(median_filter(x, 1), x)

    def test_median_spike(self):
        np.testing.assert_array_equal(median_filter([1, 9, 1, 1, 1], 3), [1, 1, 1, 1, 1])

    def test_median_even_window(self):
        with pytest.raises(ContractError):
            median_filter([1.0, 2.0], 4)

    @given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-5, 5)), st.sampled_from([1, 3, 5, 7, 11]))
    def test_median_matches_oracle(self, x, w):
        np.testing.assert_array_equal(median_filter(x, w), median_oracle(x, w))

    @given(st.floats(-3, 3), st.integers(1, 30), st.sampled_from([1, 3, 9, 21]))
    def test_median_constant(self, c, n, w):
        np.testing.assert_array_equal(median_filter(np.full(n, c), w), np.full(n, c))

    def test_centre(self):
        np.testing.assert_array_equal(centre([0, 1], 0.5, 0.0), [-0.5, 0.5])
        np.testing.assert_array_equal(centre([3, 4], 0.2, 0.2), [3, 4])

    def test_scale(self):
        np.testing.assert_array_equal(scale([0, 2], 2.0, 1.0), [-1, 3])
        np.testing.assert_array_equal(scale([0, 2], 1.0, 5.0), [0, 2])

    def test_shift(self):
        np.testing.assert_array_equal(time_shift([1, 2, 3, 4], 1), [1, 1, 2, 3])
        np.testing.assert_array_equal(time_shift([1, 2, 3, 4], 0), [1, 2, 3, 4])
        with pytest.raises(ContractError):
            time_shift([1, 2, 3], 3)

    def test_grid(self):
        g = geometric_grid(1, 500, odd=True)
        assert g[0] == 1 and g[-1] == 499
        assert all(v % 2 == 1 for v in g)
        assert g == sorted(set(g)) and 15 <= len(g) <= 20


class TestSearch:
    def test_perfect_prediction_takes_no_step(self):
        g = smooth_gold(200, 0)
        c = search_dimension(g, g)
        assert c.step_ccc == {}
        assert c.median_window is None and c.centre is None and c.scale is None and c.shift is None

    def test_constant_bias_repaired(self):
        g = smooth_gold(300, 1)
        c = search_dimension(g + 0.3, g)
        assert c.centre is not None
        fixed = apply_chain(ChainConfig(dimensions={"arousal": c}), g + 0.3)
        assert ccc(fixed, g).rho_c > 0.99

    def test_half_scale_repaired(self):
        g = smooth_gold(300, 2)
        g = g - g.mean()
        c = search_dimension(0.5 * g, g)
        assert c.scale is not None and c.scale[0] == pytest.approx(2.0)
        assert c.final_ccc > 0.99

    def test_lag_recovered(self):
        g = smooth_gold(400, 3)
        lag = geometric_grid(1, 250)[6]
        early = np.concatenate([g[lag:], np.full(lag, g[-1])])
        c = search_dimension(early, g)
        assert c.shift == lag
        assert c.final_ccc > c.raw_ccc

    def test_misaligned(self):
        with pytest.raises(ContractError):
            search_dimension(np.zeros(4), np.zeros(5))

    def test_zero_variance_skips_scale(self, caplog):
        g = smooth_gold(50, 4)
        c = search_dimension(np.full(50, 0.1), g)
        assert c.scale is None
        assert "zero variance" in caplog.text

    @given(st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_never_worse(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 200))
        g = rng.normal(size=n).cumsum() * 0.1
        p = rng.uniform(-1, 2) * g + rng.normal(scale=rng.uniform(0.05, 1), size=n) + rng.uniform(-1, 1)
        cfg = chain_search(p, g)
        after = ccc(apply_chain(cfg, p), g).rho_c
        assert after >= ccc(p, g).rho_c
        assert after == pytest.approx(cfg.dimensions["arousal"].final_ccc, abs=1e-12)

    def test_segments_respected(self):
        g = smooth_gold(120, 5)
        segs = [60, 60]
        c = search_dimension(g + 0.1 * np.random.default_rng(6).normal(size=120), g, segments=segs)
        assert c.shift is None or c.shift < 60

    def test_per_recording_centring(self):
        g = np.concatenate([smooth_gold(80, 7), smooth_gold(80, 8)])
        offsets = np.concatenate([np.full(80, 0.5), np.full(80, -0.5)])
        cfg = chain_search(g + offsets, g, segments=[80, 80], per_recording=True)
        out = apply_chain(cfg, g + offsets, segments=[80, 80])
        assert ccc(out, g).rho_c > ccc(g + offsets, g).rho_c


class TestChainConfig:
    def test_empty_identity(self):
        p = np.random.default_rng(0).normal(size=(10, 2))
        np.testing.assert_array_equal(apply_chain(ChainConfig(), p), p)

    def test_json_round_trip(self, tmp_path):
        g = smooth_gold(150, 9)
        p = np.stack([0.5 * g + 0.2, g[::-1]], axis=1)
        cfg = chain_search(p, np.stack([g, g[::-1]], axis=1))
        cfg.save(tmp_path / "chain.json")
        back = ChainConfig.load(tmp_path / "chain.json")
        assert back == cfg
        np.testing.assert_array_equal(apply_chain(back, p), apply_chain(cfg, p))

    def test_dimension_names(self):
        g = smooth_gold(60, 10)
        cfg = chain_search(np.stack([g, g], 1), np.stack([g, g], 1))
        assert list(cfg.dimensions) == ["arousal", "valence"]
