"""Spectral analysis: DFT magnitudes, periodogram PSD, autocorrelation,
and ranked detection of dominant periods.

Frequencies are reported in cycles per day and periods in hours, which
keeps daily/half-daily structure readable regardless of the grid step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .telemetry import DAY_S, HOUR_S, Series

DETREND_NONE = "none"
DETREND_MEAN = "mean"
DETREND_LINEAR = "linear"

WINDOW_RECT = "rect"
WINDOW_HANN = "hann"

AMPLITUDE = "amplitude"
POWER_DENSITY = "power_density"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided spectrum over bins 0..n//2 of the underlying transform."""

    frequencies: np.ndarray  # cycles per day, strictly increasing from 0
    magnitudes: np.ndarray
    kind: str
    step: float  # grid step of the source series, seconds

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        m = np.asarray(self.magnitudes, dtype=np.float64)
        if f.shape != m.shape or f.ndim != 1 or f.size == 0:
            raise ValueError("frequencies and magnitudes must be equal-length 1-d arrays")
        if (np.diff(f) <= 0).any():
            raise ValueError("frequencies must be strictly increasing")
        f.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "magnitudes", m)

    def __len__(self) -> int:
        return self.frequencies.size

    def to_csv_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.magnitudes.tolist()))


@dataclass
class PeriodicityReport:
    """Ranked periodic structure: spectral peaks and/or autocorrelation peaks."""

    peaks: list[tuple[float, float]] = field(default_factory=list)  # (period h, strength)
    acf_peaks: list[tuple[float, float]] = field(default_factory=list)  # (lag h, r)

    def to_dict(self) -> dict:
        return {
            "peaks": [{"period_hours": p, "strength": s} for p, s in self.peaks],
            "acf_peaks": [{"lag_hours": l, "r": r} for l, r in self.acf_peaks],
        }


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (DFT-even), flat for n == 1."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _prepare(series: Series, detrend: str, window: str) -> np.ndarray:
    x = series.values
    if np.isnan(x).any():
        raise DataError("series has gaps; fill or drop them before a transform")
    if len(x) < 4:
        raise DataError(f"series too short for a transform: {len(x)} < 4")
    if detrend == DETREND_MEAN:
        x = x - x.mean()
    elif detrend == DETREND_LINEAR:
        t = np.arange(len(x), dtype=np.float64)
        slope, intercept = np.polyfit(t, x, 1)
        x = x - (slope * t + intercept)
    elif detrend != DETREND_NONE:
        raise ValueError(f"unknown detrend {detrend!r}")
    if window == WINDOW_HANN:
        x = x * hann_window(len(x))
    elif window != WINDOW_RECT:
        raise ValueError(f"unknown window {window!r}")
    return np.asarray(x, dtype=np.float64)


def dft_complex(x: np.ndarray) -> np.ndarray:
    """Full complex DFT, X[k] = sum_t x[t] exp(-2i pi k t / n)."""
    return np.fft.fft(x)


def _frequencies_cpd(n_bins: int, n: int, step: float) -> np.ndarray:
    # multiply before dividing so exact-integer cycle counts stay exact
    return np.arange(n_bins) * DAY_S / (n * step)


def dft(series: Series, detrend: str = DETREND_MEAN, window: str = WINDOW_HANN) -> Spectrum:
    """Amplitude spectrum |X_k| at bins 0..n//2 after detrend/window."""
    x = _prepare(series, detrend, window)
    n = len(x)
    mags = np.abs(np.fft.rfft(x))
    return Spectrum(_frequencies_cpd(len(mags), n, series.step), mags, AMPLITUDE, series.step)


def psd(series: Series, detrend: str = DETREND_MEAN, window: str = WINDOW_HANN) -> Spectrum:
    """Periodogram |X_k|^2 / (n * step) at bins 0..n//2.

    Summing the implied two-sided periodogram times step recovers the
    windowed signal's energy (Parseval).
    """
    x = _prepare(series, detrend, window)
    n = len(x)
    power = np.abs(np.fft.rfft(x)) ** 2 / (n * series.step)
    return Spectrum(_frequencies_cpd(len(power), n, series.step), power, POWER_DENSITY, series.step)


def autocorrelation(series: Series, max_lag: float) -> list[tuple[float, float]]:
    """Biased normalized autocorrelation r(k) for lags 0..max_lag.

    r(k) = sum (x_t - mean)(x_{t+k} - mean) / sum (x_t - mean)^2, so
    r(0) = 1 and |r| <= 1.  Lags are returned in seconds.
    """
    x = series.values
    if np.isnan(x).any():
        raise DataError("series has gaps; fill or drop them before autocorrelation")
    n = len(x)
    span = (n - 1) * series.step
    if not 0 < max_lag < span:
        raise DataError(f"max_lag must be in (0, span={span})")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DataError("constant series has no defined autocorrelation")
    k_max = int(max_lag // series.step)
    corr = np.correlate(d, d, mode="full")[n - 1 : n + k_max]
    r = corr / denom
    return [(k * series.step, float(r[k])) for k in range(k_max + 1)]


def _local_maxima(values: np.ndarray, lo: int, hi: int) -> list[int]:
    """Indices i in [lo, hi) strictly greater than both neighbours inside
    [lo, hi); a missing neighbour never disqualifies."""
    out = []
    for i in range(lo, hi):
        left = values[i - 1] if i - 1 >= lo else -np.inf
        right = values[i + 1] if i + 1 < hi else -np.inf
        if values[i] > left and values[i] > right:
            out.append(i)
    return out


def detect_periods(
    spectrum: Spectrum | None = None,
    acf: list[tuple[float, float]] | None = None,
    top_k: int = 3,
    min_strength: float = 0.05,
) -> PeriodicityReport:
    """Rank dominant periods from a spectrum and/or an autocorrelation.

    Spectral peaks are non-DC local maxima whose share of the non-DC
    power is at least ``min_strength``; strengths are compared at 1e-9
    resolution so effectively-equal peaks break deterministically toward
    the longer period.  ACF peaks are positive local maxima of r (the
    zero-lag point only serves as a neighbour).  Both lists carry at
    most ``top_k`` entries.
    """
    if spectrum is None and acf is None:
        raise ValueError("need a spectrum or an autocorrelation")
    report = PeriodicityReport()

    if spectrum is not None and len(spectrum) > 1:
        mags = spectrum.magnitudes
        power = mags if spectrum.kind == POWER_DENSITY else mags**2
        total = float(power[1:].sum())
        if total > 0.0:
            candidates = []
            for k in _local_maxima(power, 1, len(power)):
                strength = float(power[k] / total)
                if strength >= min_strength:
                    period_h = 24.0 / float(spectrum.frequencies[k])
                    candidates.append((period_h, strength))
            candidates.sort(key=lambda ps: (-round(ps[1], 9), -ps[0]))
            report.peaks = candidates[:top_k]

    if acf is not None and len(acf) > 2:
        r = np.array([ri for _, ri in acf])
        lags = [lag for lag, _ in acf]
        candidates = []
        for k in range(1, len(r) - 1):
            if r[k] > r[k - 1] and r[k] > r[k + 1] and r[k] > 0.0:
                candidates.append((lags[k] / HOUR_S, float(r[k])))
        candidates.sort(key=lambda lr: (-lr[1], -lr[0]))
        report.acf_peaks = candidates[:top_k]

    return report
