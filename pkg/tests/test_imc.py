"""Tests for the analog crossbar model: programming, drift and MVM."""

from __future__ import annotations

import numpy as np
import pytest

from driftnas.errors import InvalidTime, ShapeError
from driftnas.imc import (
    ProgrammedTile,
    RpuConfig,
    drift,
    linear_forward,
    map_weights,
    mvm,
    quantize,
    read_back,
    rpu_id,
)
from driftnas.models import ONE_DAY, ONE_MONTH


def _tile(rng: np.random.Generator, cfg: RpuConfig, shape=(64, 32)) -> ProgrammedTile:
    g = rng.uniform(0.0, cfg.g_max, shape)
    return ProgrammedTile(
        g_plus=g,
        g_minus=rng.uniform(0.0, cfg.g_max, shape),
        nu_plus=rng.normal(cfg.nu_mean, cfg.nu_std, shape),
        nu_minus=rng.normal(cfg.nu_mean, cfg.nu_std, shape),
        scale=1.0,
        time=cfg.t0,
    )


class TestDrift:
    @pytest.mark.parametrize("t", [20.0, 3600.0, ONE_DAY, ONE_MONTH])
    def test_power_law_exact(self, rpu, t):
        tile = _tile(np.random.default_rng(0), rpu)
        drifted = drift(tile, t, rpu)
        expected = tile.g_plus * (t / rpu.t0) ** -tile.nu_plus
        np.testing.assert_allclose(drifted.g_plus, expected, rtol=1e-12)
        np.testing.assert_allclose(drifted.g_minus, tile.g_minus * (t / rpu.t0) ** -tile.nu_minus, rtol=1e-12)
        assert drifted.time == t

    def test_drift_composes(self, rpu):
        tile = _tile(np.random.default_rng(1), rpu)
        twice = drift(drift(tile, ONE_DAY, rpu), ONE_MONTH, rpu)
        once = drift(tile, ONE_MONTH, rpu)
        np.testing.assert_allclose(twice.g_plus, once.g_plus, rtol=1e-12)
        np.testing.assert_allclose(twice.g_minus, once.g_minus, rtol=1e-12)

    def test_input_tile_untouched(self, rpu):
        tile = _tile(np.random.default_rng(2), rpu)
        before = tile.g_plus.copy()
        drift(tile, ONE_MONTH, rpu)
        np.testing.assert_array_equal(tile.g_plus, before)

    def test_before_t0_rejected(self, rpu):
        tile = _tile(np.random.default_rng(3), rpu)
        with pytest.raises(InvalidTime) as exc:
            drift(tile, 1.0, rpu)
        assert exc.value.t0 == rpu.t0

    def test_unprogrammed_time_defaults_to_t0(self, rpu):
        tile = _tile(np.random.default_rng(4), rpu)
        fresh = ProgrammedTile(tile.g_plus, tile.g_minus, tile.nu_plus, tile.nu_minus, 1.0)
        np.testing.assert_array_equal(drift(fresh, ONE_DAY, rpu).g_plus, drift(tile, ONE_DAY, rpu).g_plus)


class TestQuantize:
    def test_two_bit_example(self):
        assert quantize(0.1, 2, 1.0) == pytest.approx(1.0 / 3.0)

    def test_zero_bits_is_identity(self):
        x = np.array([-3.0, 0.123, 7.5])
        np.testing.assert_array_equal(quantize(x, 0, 1.0), x)

    def test_clips_to_bound(self):
        assert quantize(5.0, 4, 1.0) == pytest.approx(1.0)
        assert quantize(-5.0, 4, 1.0) == pytest.approx(-1.0)

    @pytest.mark.parametrize("bits", [1, 3, 5])
    def test_dac_levels(self, bits):
        x = np.random.default_rng(bits).uniform(-2.0, 2.0, 5000)
        assert len(np.unique(quantize(x, bits, 1.0))) <= 2**bits

    @pytest.mark.parametrize("bits", [2, 3, 4])
    def test_adc_levels_through_mvm(self, rpu, bits):
        cfg = rpu.model_copy(update={"dac_bits": bits, "adc_bits": bits})
        rng = np.random.default_rng(bits)
        tile = map_weights(rng.standard_normal((64, 32)), cfg, rng)[0]
        out = mvm(tile, rng.uniform(-1.0, 1.0, (200, 64)), cfg)
        assert len(np.unique(out)) <= 2**bits


class TestMapping:
    def test_tile_grid(self, rpu):
        tiles = map_weights(np.ones((600, 700)), rpu, np.random.default_rng(0))
        assert len(tiles) == 4
        assert tiles[-1].shape == (88, 188)
        assert (tiles[-1].row_offset, tiles[-1].col_offset) == (512, 512)

    def test_conductances_within_range(self, rpu):
        w = np.random.default_rng(1).standard_normal((100, 50))
        for tile in map_weights(w, rpu, np.random.default_rng(2)):
            assert tile.g_plus.min() >= 0.0 and tile.g_plus.max() <= rpu.g_max
            assert tile.g_minus.min() >= 0.0 and tile.g_minus.max() <= rpu.g_max
            assert tile.time == rpu.t0

    def test_ideal_read_back(self, rpu):
        w = np.random.default_rng(3).standard_normal((300, 600))
        tiles = map_weights(w, rpu.ideal(), np.random.default_rng(4))
        np.testing.assert_allclose(read_back(tiles, w.shape), w, rtol=1e-12, atol=1e-12)

    def test_noise_is_seeded(self, rpu):
        w = np.random.default_rng(5).standard_normal((40, 40))
        a = read_back(map_weights(w, rpu, np.random.default_rng(6)), w.shape)
        b = read_back(map_weights(w, rpu, np.random.default_rng(6)), w.shape)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, w)

    def test_rejects_vectors(self, rpu):
        with pytest.raises(ShapeError):
            map_weights(np.ones(5), rpu, np.random.default_rng(0))

    def test_rejects_non_finite(self, rpu):
        with pytest.raises(ValueError):
            map_weights(np.array([[1.0, np.nan]]), rpu, np.random.default_rng(0))

    def test_zero_matrix(self, rpu):
        tiles = map_weights(np.zeros((4, 3)), rpu.ideal(), np.random.default_rng(0))
        np.testing.assert_array_equal(mvm(tiles[0], np.ones(4), rpu), np.zeros(3))

    def test_mvm_shape_mismatch(self, rpu):
        tiles = map_weights(np.ones((4, 3)), rpu, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            mvm(tiles[0], np.ones(5), rpu)


class TestLinearForward:
    def test_ideal_matches_digital(self, rpu):
        cfg = rpu.ideal()
        rng = np.random.default_rng(0)
        for _ in range(100):
            rows, cols = rng.integers(1, 601, size=2)
            w = rng.standard_normal((rows, cols))
            x = rng.standard_normal((4, rows))
            expected = x @ w
            out = linear_forward(w, x, cfg, ONE_DAY, rng)
            err = np.linalg.norm(out - expected) / max(np.linalg.norm(expected), 1e-12)
            assert err < 1e-6

    def test_vector_input(self, rpu):
        w = np.random.default_rng(1).standard_normal((10, 3))
        x = np.random.default_rng(2).standard_normal(10)
        out = linear_forward(w, x, rpu.ideal(), rpu.t0, np.random.default_rng(0))
        assert out.shape == (3,)
        np.testing.assert_allclose(out, x @ w, rtol=1e-9)

    def test_uniform_drift_scales_output(self, rpu):
        cfg = rpu.model_copy(update={"prog_noise_std": 0.0, "nu_std": 0.0})
        w = np.random.default_rng(3).standard_normal((50, 20))
        x = np.random.default_rng(4).standard_normal((6, 50))
        out = linear_forward(w, x, cfg, ONE_DAY, np.random.default_rng(0))
        np.testing.assert_allclose(out, (x @ w) * (ONE_DAY / cfg.t0) ** -cfg.nu_mean, rtol=1e-9)

    def test_drift_compensation_restores_uniform_drift(self, rpu):
        cfg = rpu.model_copy(update={"prog_noise_std": 0.0, "nu_std": 0.0, "drift_compensation": True})
        w = np.random.default_rng(3).standard_normal((50, 20))
        x = np.random.default_rng(4).standard_normal((6, 50))
        out = linear_forward(w, x, cfg, ONE_MONTH, np.random.default_rng(0))
        np.testing.assert_allclose(out, x @ w, rtol=1e-9)

    def test_shape_mismatch(self, rpu):
        with pytest.raises(ShapeError):
            linear_forward(np.ones((4, 3)), np.ones((2, 5)), rpu, rpu.t0, np.random.default_rng(0))

    def test_worked_example(self, rpu):
        w = np.array([[1.0, 2.0], [3.0, -4.0]])
        out = linear_forward(w, np.array([1.0, 1.0]), rpu.ideal(), ONE_DAY, np.random.default_rng(0))
        np.testing.assert_allclose(out, [4.0, -2.0], atol=1e-6)

    def test_error_grows_with_time(self, rpu):
        w = np.random.default_rng(5).standard_normal((64, 32))
        x = np.random.default_rng(6).standard_normal((16, 64))
        exact = x @ w
        times = [rpu.t0, 3600.0, ONE_DAY, ONE_MONTH]
        mse = np.zeros(len(times))
        for seed in range(32):
            for k, t in enumerate(times):
                out = linear_forward(w, x, rpu, t, np.random.default_rng(seed))
                mse[k] += np.mean((out - exact) ** 2) / 32
        assert np.all(np.diff(mse) >= 0.0)


class TestRpuConfig:
    def test_ideal_switches_off_non_idealities(self, rpu):
        ideal = rpu.ideal()
        assert ideal.prog_noise_std == ideal.nu_mean == ideal.nu_std == 0.0
        assert ideal.tile_size == rpu.tile_size

    def test_rpu_id_tracks_changes(self, rpu):
        assert rpu_id(rpu) == rpu_id(RpuConfig())
        assert rpu_id(rpu) != rpu_id(rpu.model_copy(update={"prog_noise_std": 0.05}))
