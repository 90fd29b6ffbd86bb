import numpy as np
import pytest
from numpy.testing import assert_allclose

from lingagg_extractor.audio import (
    frame_snr_series,
    mix_at_snr,
    n_frames,
    read_wav,
    write_wav,
)

RATE = 16_000


class TestWavIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        wav = 0.5 * rng.standard_normal(8000)
        path = tmp_path / "x.wav"
        write_wav(path, wav, RATE)
        back, rate = read_wav(path)
        assert rate == RATE
        assert_allclose(back, np.clip(wav, -1, 1 - 1 / 32768), atol=1.0 / 32768)


class TestMixAtSnr:
    def test_equal_power_zero_db_scale_one(self):
        rng = np.random.default_rng(1)
        clean = rng.standard_normal(8000)
        noise = clean.copy()  # identical power
        _, scaled, _ = mix_at_snr(clean, noise, 0.0, seed=0)
        assert_allclose(np.sum(scaled ** 2), np.sum(clean ** 2), rtol=1e-12)

    @pytest.mark.parametrize("target", [-10.0, 0.0, 10.0, 20.0])
    def test_global_ratio_exact(self, target):
        rng = np.random.default_rng(2)
        clean = rng.standard_normal(9000) * 0.3
        noise = rng.standard_normal(9000) * 0.8
        noisy, scaled, _ = mix_at_snr(clean, noise, target, seed=0)
        ratio = np.sum(clean ** 2) / np.sum(scaled ** 2)
        assert abs(ratio / 10.0 ** (target / 10.0) - 1.0) < 1e-6
        assert_allclose(noisy, clean + scaled, rtol=1e-12)

    def test_short_noise_is_looped_deterministically(self):
        rng = np.random.default_rng(3)
        clean = rng.standard_normal(10_000)
        noise = rng.standard_normal(3000)
        a = mix_at_snr(clean, noise, 5.0, seed=9)[0]
        b = mix_at_snr(clean, noise, 5.0, seed=9)[0]
        c = mix_at_snr(clean, noise, 5.0, seed=10)[0]
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)  # different crop offset

    def test_silent_clean_rejected(self):
        with pytest.raises(ValueError, match="silent"):
            mix_at_snr(np.zeros(1000), np.ones(1000), 0.0, seed=0)


class TestFrameSeries:
    def test_series_length_counts_hops(self):
        # 1 s at a 20 ms hop: 50 hops cover the signal
        assert n_frames(16_000, RATE) == 50
        assert n_frames(16_001, RATE) == 51
        assert n_frames(100, RATE) == 1

    def test_constant_ratio_recovers_target(self):
        rng = np.random.default_rng(4)
        clean = rng.standard_normal(16_000)
        _, scaled, series = mix_at_snr(clean, rng.standard_normal(16_000), 6.0, seed=0)
        assert series.shape == (50,)
        # stationary signals: every frame sits near the global target
        assert abs(np.median(series) - 6.0) < 1.5

    def test_series_matches_windowed_powers(self):
        clean = np.ones(800)        # 2.5 windows at 16 kHz
        noise = np.full(800, 0.5)
        series = frame_snr_series(clean, noise, RATE)
        assert series.shape == (3,)
        assert_allclose(series, 10 * np.log10(4.0), atol=1e-9)
