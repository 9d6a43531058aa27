import numpy as np
import pytest

from dartfx.hypertime.errors import SpectralError
from dartfx.hypertime.model import DAY, WEEK, SpectralConfig
from dartfx.hypertime.spectral import (
    ResidualSeries,
    amplitude,
    default_candidates,
    fourier_coefficients,
    prominent_period,
    spectral_sum,
    spectrum,
)


def _naive_amplitude(times, values, period):
    mean = sum(values) / len(values)
    re = im = 0.0
    for t, v in zip(times, values, strict=True):
        re += (v - mean) * np.cos(2 * np.pi * t / period)
        im -= (v - mean) * np.sin(2 * np.pi * t / period)
    return float(np.hypot(re, im) / len(values))


def test_default_candidates():
    candidates = default_candidates()
    assert len(candidates) == 168
    assert candidates[0] == WEEK
    assert candidates[6] == DAY
    assert candidates[-1] == pytest.approx(3600.0)
    assert SpectralConfig().candidates() == candidates


def test_pure_cosine_amplitude_is_half():
    t = np.arange(0, 7 * DAY, 600.0)
    series = ResidualSeries(times=t, values=np.cos(2 * np.pi * t / DAY))
    assert amplitude(series, DAY) == pytest.approx(0.5, abs=1e-9)
    assert prominent_period(series, default_candidates()) == DAY


def test_constant_series_has_zero_spectrum():
    series = ResidualSeries(times=np.arange(100.0) * 977.0, values=np.full(100, 3.0))
    assert spectral_sum(series, default_candidates()) == pytest.approx(0.0, abs=1e-12)


def test_spectral_sum_matches_amplitudes():
    rng = np.random.default_rng(1)
    series = ResidualSeries(times=np.sort(rng.uniform(0, WEEK, 300)), values=rng.normal(size=300))
    candidates = default_candidates()
    assert spectral_sum(series, candidates) == pytest.approx(sum(amplitude(series, T) for T in candidates))


@pytest.mark.parametrize("seed", range(20))
def test_matches_naive_evaluation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 501))
    times = np.sort(rng.uniform(0, 3 * WEEK, n))
    values = rng.normal(size=n)
    series = ResidualSeries(times=times, values=values)
    candidates = default_candidates()
    fast = np.abs(fourier_coefficients(series, candidates))
    slow = np.array([_naive_amplitude(times, values, T) for T in candidates])
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-9)
    expected = max(zip(slow, candidates, strict=True), key=lambda p: (p[0], p[1]))[1]
    if np.sort(slow)[-1] - np.sort(slow)[-2] > 1e-9:
        assert prominent_period(series, candidates) == expected


def test_spectrum_is_sorted_and_breaks_ties_to_longer_period():
    series = ResidualSeries(times=[0.0], values=[1.0])
    result = spectrum(series, [DAY, WEEK, 3600.0])
    assert [e.period for e in result.entries] == [WEEK, DAY, 3600.0]
    assert result.candidate_count == 3


def test_excluded_periods_are_skipped():
    t = np.arange(0, 7 * DAY, 600.0)
    series = ResidualSeries(times=t, values=np.cos(2 * np.pi * t / DAY) + 0.5 * np.cos(2 * np.pi * t / 43200.0))
    assert prominent_period(series, default_candidates(), exclude=[DAY]) == 43200.0


def test_all_excluded_is_an_error():
    series = ResidualSeries(times=[0.0, 1.0], values=[0.0, 1.0])
    with pytest.raises(SpectralError):
        prominent_period(series, [DAY], exclude=[DAY])


def test_series_must_be_consistent():
    with pytest.raises(ValueError, match="timestamps"):
        ResidualSeries(times=[0.0, 1.0], values=[1.0])
    with pytest.raises(ValueError, match="at least one sample"):
        ResidualSeries(times=[], values=[])


def test_white_noise_has_no_dominant_period():
    rng = np.random.default_rng(12)
    t = np.arange(0, 3 * WEEK, 600.0)
    result = spectrum(ResidualSeries(times=t, values=rng.normal(0.0, 0.1, t.size)), default_candidates())
    assert result.top.amplitude < 5 * np.median([e.amplitude for e in result.entries])
