import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechemo.dsp import Spectrogram, SpectrogramConfig
from speechemo.vtlp import (AlphaSampler, AugmentMode, AugmentStrategy, WarpParams, inverse_warp_frequency,
                            sample_alpha, tta_alphas, warp_frequency, warp_spectrogram, warp_values)

F_MAX = 4000.0
alphas = st.floats(0.9, 1.1)
freqs = st.floats(0.0, F_MAX)


def _spec(values, sr=8000):
    return Spectrogram(np.asarray(values, dtype=np.float64), SpectrogramConfig(), sr)


def test_warp_frequency_examples():
    p = WarpParams(1.1, F_MAX)
    assert p.f0 == 3600.0
    assert warp_frequency(0.0, p) == 0.0
    assert warp_frequency(2000.0, p) == pytest.approx(2200.0, abs=1e-12)
    assert warp_frequency(3800.0, p) == pytest.approx(3980.0, abs=1e-9)
    assert warp_frequency(4000.0, p) == pytest.approx(4000.0, abs=1e-9)
    for a in (0.9, 0.95, 1.0, 1.05):
        assert warp_frequency(F_MAX, WarpParams(a, F_MAX)) == pytest.approx(F_MAX, abs=1e-9)


def test_warp_frequency_domain():
    p = WarpParams(1.0, F_MAX)
    with pytest.raises(ValueError):
        warp_frequency(-1.0, p)
    with pytest.raises(ValueError):
        warp_frequency(4000.5, p)


def test_params_validation():
    with pytest.raises(ValueError):
        WarpParams(1.0, F_MAX, f0_ratio=1.0)
    with pytest.raises(ValueError):
        WarpParams(0.0, F_MAX)
    assert not WarpParams(1.5, F_MAX).in_range
    with pytest.raises(ValueError):
        AugmentStrategy(alpha_range=(0.8, 1.0))


@settings(max_examples=200, deadline=None)
@given(alphas, freqs, freqs)
def test_monotone(a, f1, f2):
    p = WarpParams(a, F_MAX)
    lo, hi = sorted((f1, f2))
    if hi > lo:
        assert warp_frequency(lo, p) < warp_frequency(hi, p)


@settings(max_examples=200, deadline=None)
@given(alphas, freqs)
def test_inverse(a, f):
    p = WarpParams(a, F_MAX)
    assert inverse_warp_frequency(warp_frequency(f, p), p) == pytest.approx(f, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(alphas)
def test_continuity_at_f0(a):
    p = WarpParams(a, F_MAX)
    upper = (F_MAX - a * p.f0) / (F_MAX - p.f0) * (p.f0 - p.f0) + a * p.f0
    assert warp_frequency(p.f0, p) == upper == a * p.f0


def test_identity_warp(rng):
    spec = _spec(rng.standard_normal((7, 257)))
    out = warp_spectrogram(spec, WarpParams(1.0, F_MAX))
    assert out.values.shape == spec.values.shape
    assert np.max(np.abs(out.values - spec.values)) <= 1e-9


def test_peak_relocates():
    spec = _spec(np.zeros((1, 257)))
    bin_hz = spec.bin_hz
    b = 100
    spec.values[0, b] = 1.0
    out = warp_spectrogram(spec, WarpParams(0.95, F_MAX))
    target = 0.95 * b * bin_hz
    assert int(np.argmax(out.values[0])) == int(round(target / bin_hz))

    # brute-force oracle: output bin k reads the input at G^-1(f_k) by linear interpolation
    freqs = spec.bin_frequencies()
    oracle = np.interp(freqs / 0.95, freqs, spec.values[0])
    low = freqs <= 0.95 * 0.9 * F_MAX
    np.testing.assert_allclose(out.values[0, low], oracle[low], atol=1e-12)


def test_round_trip_low_band():
    freqs = np.arange(257) * 15.625
    smooth = np.sin(freqs / 300.0) + 0.5 * np.cos(freqs / 710.0)
    spec = Spectrogram(smooth[None, :].repeat(3, 0), SpectrogramConfig(), 8000)
    a = 1.08
    there = warp_spectrogram(spec, WarpParams(a, F_MAX))
    back = warp_spectrogram(there, WarpParams(1 / a, F_MAX))
    low = freqs < 0.8 * F_MAX
    rel = np.abs(back.values[:, low] - spec.values[:, low]) / np.maximum(np.abs(spec.values[:, low]), 1.0)
    assert rel.max() <= 1e-2


@pytest.mark.parametrize("a", [0.9, 0.95, 1.05, 1.1])
def test_energy_sanity(a):
    freqs = np.arange(257) * 15.625
    smooth = 2.0 + np.exp(-((freqs - 1200) / 600) ** 2)
    spec = Spectrogram(smooth[None, :], SpectrogramConfig(), 8000)
    out = warp_spectrogram(spec, WarpParams(a, F_MAX))
    assert abs(out.values.sum() - spec.values.sum()) / spec.values.sum() < 0.05


def test_warp_preserves_dtype():
    v = np.ones((2, 257), dtype=np.float32)
    out = warp_values(v, np.arange(257) * 15.625, WarpParams(1.05, F_MAX))
    assert out.dtype == np.float32


def test_sample_alpha():
    rng = np.random.default_rng(0)
    assert all(sample_alpha(AugmentStrategy(alpha_range=(1.0, 1.0)), rng) == 1.0 for _ in range(5))
    draws = np.array([sample_alpha(AugmentStrategy(), rng) for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) <= 0.002
    assert draws.min() >= 0.9 and draws.max() <= 1.1

    s = AugmentStrategy()
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [sample_alpha(s, r1) for _ in range(10)] == [sample_alpha(s, r2) for _ in range(10)]


def test_alpha_sampler_modes():
    glob = AlphaSampler(AugmentStrategy(AugmentMode.PER_EPOCH_GLOBAL), np.random.default_rng(1))
    glob.new_epoch()
    first = {glob() for _ in range(20)}
    glob.new_epoch()
    second = {glob() for _ in range(20)}
    assert len(first) == 1 and len(second) == 1 and first != second

    per = AlphaSampler(AugmentStrategy(AugmentMode.PER_SAMPLE), np.random.default_rng(1))
    per.new_epoch()
    assert len({per() for _ in range(20)}) == 20


def test_tta_alphas():
    a = tta_alphas()
    assert len(a) == 11
    assert a[0] == 0.9 and a[5] == 1.0 and a[-1] == 1.1
    assert np.allclose(np.diff(a), 0.02)
