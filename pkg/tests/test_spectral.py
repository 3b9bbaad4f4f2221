"""Transforms against a naive DFT oracle, plus period detection."""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_series
from mgi.errors import DataError
from mgi.spectral import (
    autocorrelation,
    detect_periods,
    dft,
    dft_complex,
    hann_window,
    psd,
)
from mgi.telemetry import Channel, Series

HOUR = 3600.0


def naive_dft(x):
    """O(n^2) reference transform: X[k] = sum_t x[t] e^{-2i pi k t / n}."""
    n = len(x)
    k = np.arange(n).reshape(-1, 1)
    t = np.arange(n).reshape(1, -1)
    return (np.exp(-2j * np.pi * k * t / n) @ x.reshape(-1, 1)).ravel()


def series_of(values, step=600.0):
    return make_series(Channel.LOAD_POWER, values, start=0.0, step=step)


def test_constant_series_is_dc_only():
    s = series_of(np.full(32, 3.7))
    spec = dft(s, detrend="none", window="rect")
    assert spec.magnitudes[0] == pytest.approx(32 * 3.7)
    assert np.all(spec.magnitudes[1:] < 1e-9)


def test_pure_sine_hits_single_bin():
    n = 96
    t = np.arange(n)
    amp = 2.5
    s = series_of(amp * np.sin(2 * np.pi * t / 24.0))
    spec = dft(s, detrend="none", window="rect")
    expected = naive_dft(s.values)
    assert spec.magnitudes[4] == pytest.approx(amp * n / 2, rel=1e-12)
    mask = np.ones(len(spec), dtype=bool)
    mask[4] = False
    assert np.all(spec.magnitudes[mask] < 1e-9 * amp * n)
    assert np.allclose(spec.magnitudes, np.abs(expected[: n // 2 + 1]), atol=1e-9 * n)


@given(st.integers(5, 257), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_dft_matches_oracle(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    spec = dft(series_of(x), detrend="none", window="rect")
    want = np.abs(naive_dft(x))[: n // 2 + 1]
    scale = max(1.0, want.max())
    assert np.max(np.abs(spec.magnitudes - want)) <= 1e-9 * scale


def test_dft_matches_oracle_with_window_and_detrend():
    rng = np.random.default_rng(7)
    x = rng.uniform(0.0, 5.0, 240)
    spec = dft(series_of(x), detrend="mean", window="hann")
    pre = (x - x.mean()) * hann_window(len(x))
    want = np.abs(naive_dft(pre))[:121]
    assert np.max(np.abs(spec.magnitudes - want)) <= 1e-9 * max(1.0, want.max())


@given(st.integers(4, 300), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_parseval(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, n)
    X = dft_complex(x)
    lhs = float(np.sum(x * x))
    rhs = float(np.sum(np.abs(X) ** 2) / n)
    assert lhs == pytest.approx(rhs, rel=1e-9)


@given(st.integers(4, 128), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_linearity_of_complex_transform(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=n)
    a, b = rng.uniform(-3, 3, 2)
    lhs = dft_complex(a * x + b * y)
    rhs = a * dft_complex(x) + b * dft_complex(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_dft_rejects_gaps_and_short_series():
    vals = np.ones(16)
    vals[3] = np.nan
    with pytest.raises(DataError):
        dft(series_of(vals))
    with pytest.raises(DataError):
        dft(series_of(np.ones(3)))


def test_frequency_axis_in_cycles_per_day():
    n = 144  # one day at 10 min
    s = series_of(np.sin(2 * np.pi * np.arange(n) / n))
    spec = dft(s, detrend="none", window="rect")
    assert spec.frequencies[0] == 0.0
    assert spec.frequencies[1] == pytest.approx(1.0)  # one cycle per day
    assert spec.frequencies[-1] == pytest.approx(72.0)  # Nyquist of 10-min grid


def test_psd_zero_series():
    spec = psd(series_of(np.zeros(64)), detrend="none", window="rect")
    assert np.all(spec.magnitudes == 0.0)


def _two_sided_sum(one_sided, n):
    total = one_sided[0] + 2.0 * one_sided[1:-1].sum()
    if n % 2 == 0:
        return total + one_sided[-1]
    return total + 2.0 * one_sided[-1]


def test_psd_sine_energy_consistency():
    n, step = 96, 600.0
    x = np.sin(2 * np.pi * np.arange(n) / 24.0)
    spec = psd(series_of(x, step=step), detrend="none", window="rect")
    nondc = spec.magnitudes[1:]
    peak = np.argmax(nondc) + 1
    assert peak == 4
    others = np.delete(spec.magnitudes, [peak])
    assert np.all(others <= 1e-12 * spec.magnitudes[peak])
    energy = float(np.sum(x * x))
    assert _two_sided_sum(spec.magnitudes, n) * step == pytest.approx(energy, rel=1e-9)


def test_psd_white_noise_is_flat_on_average():
    n, step, seeds = 256, 600.0, 100
    acc = np.zeros(n // 2 + 1)
    for seed in range(seeds):
        x = np.random.default_rng(seed).normal(0.0, 1.0, n)
        acc += psd(series_of(x, step=step), detrend="none", window="rect").magnitudes
    acc /= seeds
    interior = acc[1:-1]  # DC/Nyquist bins have different dof
    dev = np.abs(interior - interior.mean()) / interior.mean()
    assert dev.mean() < 0.2


def test_acf_lag_zero_is_one():
    rng = np.random.default_rng(3)
    acf = autocorrelation(series_of(rng.normal(size=50)), max_lag=10 * 600.0)
    assert acf[0] == (0.0, 1.0)


def test_acf_alternating_series():
    x = np.array([1.0, -1.0] * 4)
    acf = autocorrelation(series_of(x), max_lag=600.0)
    lag, r = acf[1]
    assert lag == 600.0
    assert r == pytest.approx(-7.0 / 8.0, abs=1e-12)


def test_acf_daily_periodic_peaks():
    step = 600.0
    n = 4 * 144
    t = np.arange(n)
    x = np.sin(2 * np.pi * t / 144.0)
    acf = autocorrelation(series_of(x, step=step), max_lag=60 * HOUR)
    r = np.array([ri for _, ri in acf])
    maxima_h = [
        acf[k][0] / HOUR
        for k in range(1, len(r) - 1)
        if r[k] > r[k - 1] and r[k] > r[k + 1] and r[k] > 0
    ]
    # biased estimator can shift discrete maxima a sample or two
    assert any(abs(h - 24.0) <= 0.5 for h in maxima_h)
    assert any(abs(h - 48.0) <= 1.0 for h in maxima_h)
    # integer-cycle sinusoid: r at the exact period lag is 1 - k/n
    assert r[144] == pytest.approx(0.75, abs=1e-12)


def test_acf_constant_series_is_error():
    with pytest.raises(DataError):
        autocorrelation(series_of(np.full(32, 2.0)), max_lag=3000.0)


@given(st.integers(8, 200), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_acf_bounded_by_one(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    acf = autocorrelation(series_of(x), max_lag=(n - 1) * 600.0 * 0.9)
    rs = np.array([r for _, r in acf])
    assert np.all(np.abs(rs) <= 1.0 + 1e-12)


def _daily_series(days, periods_amps, step=600.0):
    n = int(days * 86400 / step)
    t = step * np.arange(n)
    x = np.zeros(n)
    for period_h, amp in periods_amps:
        x += amp * np.cos(2 * np.pi * t / (period_h * HOUR))
    return series_of(x, step=step)


def test_detect_periods_single_tone():
    s = _daily_series(4, [(24.0, 1.0)])
    report = detect_periods(dft(s, detrend="mean", window="rect"))
    assert len(report.peaks) == 1
    period, strength = report.peaks[0]
    assert period == pytest.approx(24.0, abs=1e-9)
    assert strength == pytest.approx(1.0, abs=1e-9)


def test_detect_periods_two_equal_tones():
    s = _daily_series(4, [(24.0, 1.0), (12.0, 1.0)])
    report = detect_periods(dft(s, detrend="mean", window="rect"), top_k=2)
    periods = [p for p, _ in report.peaks]
    strengths = [st_ for _, st_ in report.peaks]
    assert periods == [pytest.approx(24.0), pytest.approx(12.0)]  # tie -> longer first
    assert strengths[0] == pytest.approx(0.5, abs=1e-9)
    assert strengths[1] == pytest.approx(0.5, abs=1e-9)


def test_detect_periods_scale_invariant():
    s = _daily_series(5, [(24.0, 2.0), (12.0, 0.7)])
    r1 = detect_periods(dft(s))
    scaled = series_of(s.values * 37.5)
    r2 = detect_periods(dft(scaled))
    assert [p for p, _ in r1.peaks] == [p for p, _ in r2.peaks]
    assert np.allclose([x for _, x in r1.peaks], [x for _, x in r2.peaks])


def test_detect_periods_min_strength_filters():
    s = _daily_series(4, [(24.0, 1.0), (12.0, 0.05)])
    report = detect_periods(dft(s, detrend="mean", window="rect"), min_strength=0.1)
    assert [p for p, _ in report.peaks] == [pytest.approx(24.0)]


def test_detect_periods_from_acf():
    s = _daily_series(4, [(24.0, 1.0)])
    acf = autocorrelation(s, max_lag=60 * HOUR)
    report = detect_periods(acf=acf, top_k=2)
    assert report.acf_peaks
    top_lag, top_r = report.acf_peaks[0]
    assert abs(top_lag - 24.0) <= 0.5
    assert top_r > 0.5


def test_detect_periods_needs_input():
    with pytest.raises(ValueError):
        detect_periods()


def test_transform_speed_large_n():
    n = 2**17
    x = np.random.default_rng(0).normal(size=n)
    t0 = time.perf_counter()
    dft(series_of(x), detrend="mean", window="hann")
    assert time.perf_counter() - t0 < 1.0
