"""Descriptive analytics: diurnal profiles, seasonality adjustment, load
trend across years, anomaly flags, and resource/demand correlation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .telemetry import DAY_S, HOUR_S, Channel, Series, format_timestamp

SPIKE = "spike"
DROP = "drop"

GLOBAL = "global"
PER_SLOT = "per_slot"


@dataclass(frozen=True, eq=False)
class DailyProfile:
    """Per-time-of-day mean/spread of a channel across all observed days."""

    channel: Channel
    step: float
    slot_means: np.ndarray  # NaN where a slot never has data
    slot_counts: np.ndarray
    slot_stddev: np.ndarray  # population sigma

    def __len__(self) -> int:
        return self.slot_means.size

    def slot_label(self, slot: int) -> str:
        s = int(slot * self.step)
        return f"{s // 3600:02d}:{s % 3600 // 60:02d}"

    def to_csv_rows(self) -> list[tuple]:
        rows = []
        for i in range(len(self)):
            m = self.slot_means[i]
            sd = self.slot_stddev[i]
            rows.append(
                (
                    self.slot_label(i),
                    "" if math.isnan(m) else float(m),
                    "" if math.isnan(sd) else float(sd),
                    int(self.slot_counts[i]),
                )
            )
        return rows


def _slot_indices(series: Series) -> tuple[np.ndarray, int]:
    if DAY_S % series.step != 0:
        raise DataError(f"step {series.step}s does not divide a day evenly")
    n_slots = int(DAY_S // series.step)
    slots = ((series.times() % DAY_S) // series.step).astype(np.int64)
    return slots, n_slots


def typical_day(series: Series) -> DailyProfile:
    """Average the series over days, slot by slot; gaps do not count."""
    if len(series) * series.step < DAY_S:
        raise DataError("need at least one full day for a daily profile")
    slots, n_slots = _slot_indices(series)
    x = series.values
    ok = ~np.isnan(x)
    counts = np.bincount(slots[ok], minlength=n_slots).astype(np.int64)
    sums = np.bincount(slots[ok], weights=x[ok], minlength=n_slots)
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    # second pass keeps sigma clean where all of a slot's values coincide
    dev = np.zeros_like(x)
    dev[ok] = x[ok] - means[slots[ok]]
    sq = np.bincount(slots[ok], weights=dev[ok] ** 2, minlength=n_slots)
    var = np.where(counts > 0, sq / np.maximum(counts, 1), np.nan)
    sigma = np.sqrt(var)
    return DailyProfile(series.channel, series.step, means, counts, sigma)


def seasonal_adjust(series: Series) -> Series:
    """Subtract the diurnal profile, exposing non-daily structure.

    Gaps stay gaps; slots that never have data leave their samples
    unchanged only in the trivial sense that there are none to adjust.
    """
    if len(series) * series.step < 2 * DAY_S:
        raise DataError("need at least two days to separate the daily cycle")
    profile = typical_day(series)
    slots, _ = _slot_indices(series)
    adjusted = series.values - profile.slot_means[slots]
    return Series(series.channel, series.start, series.step, adjusted)


@dataclass
class TrendReport:
    per_year_mean: dict[int, float]
    per_year_daily_max_mean: dict[int, float]
    per_year_days: dict[int, int]
    slope_kw_per_year: float
    growth_pct: float

    def to_dict(self) -> dict:
        return {
            "per_year_mean": {str(y): v for y, v in sorted(self.per_year_mean.items())},
            "per_year_daily_max_mean": {
                str(y): v for y, v in sorted(self.per_year_daily_max_mean.items())
            },
            "per_year_days": {str(y): v for y, v in sorted(self.per_year_days.items())},
            "slope_kw_per_year": self.slope_kw_per_year,
            "growth_pct": self.growth_pct,
        }


def trend(load: Series, min_days_per_year: int = 30) -> TrendReport:
    """Year-over-year load trend.

    Reports the plain yearly mean and the mean of daily maxima per
    calendar year.  The least-squares slope uses yearly means of years
    with at least ``min_days_per_year`` days of data; growth_pct
    compares the first and last reported mean-of-daily-maxima.
    """
    if load.channel is not Channel.LOAD_POWER:
        raise ValueError(f"trend expects the load channel, got {load.channel}")
    t = load.times()
    x = load.values
    ok = ~np.isnan(x)
    if not ok.any():
        raise DataError("load series has no data")
    years = np.array([time.gmtime(ti).tm_year for ti in t], dtype=np.int64)
    days = (t // DAY_S).astype(np.int64)

    per_year_mean: dict[int, float] = {}
    per_year_daily_max: dict[int, float] = {}
    per_year_days: dict[int, int] = {}
    for y in sorted(set(years[ok].tolist())):
        sel = ok & (years == y)
        per_year_mean[y] = float(x[sel].mean())
        maxima = [float(np.max(x[sel & (days == d)])) for d in sorted(set(days[sel].tolist()))]
        per_year_daily_max[y] = float(np.mean(maxima))
        per_year_days[y] = len(maxima)
    if len(per_year_mean) < 2:
        raise DataError("trend needs at least two calendar years of data")

    fit_years = [y for y, nd in per_year_days.items() if nd >= min_days_per_year]
    if len(fit_years) >= 2:
        ys = np.array(fit_years, dtype=np.float64)
        ms = np.array([per_year_mean[y] for y in fit_years])
        slope = float(np.polyfit(ys, ms, 1)[0])
    else:
        slope = math.nan

    ordered = sorted(per_year_daily_max)
    first, last = per_year_daily_max[ordered[0]], per_year_daily_max[ordered[-1]]
    growth = 100.0 * (last - first) / first if first > 0 else math.nan
    return TrendReport(per_year_mean, per_year_daily_max, per_year_days, slope, growth)


@dataclass(frozen=True)
class Anomaly:
    ts: float
    channel: Channel
    value: float
    zscore: float
    kind: str  # spike | drop

    def to_dict(self) -> dict:
        return {
            "timestamp": format_timestamp(self.ts),
            "channel": self.channel.key,
            "value": self.value,
            "zscore": self.zscore,
            "kind": self.kind,
        }


def detect_anomalies(
    series: Series, z_threshold: float = 4.0, baseline: str = GLOBAL
) -> list[Anomaly]:
    """Flag samples at least ``z_threshold`` population sigmas from the
    baseline mean; the baseline is global or per time-of-day slot.
    Zero-variance slots cannot score deviations and are skipped."""
    if baseline not in (GLOBAL, PER_SLOT):
        raise ValueError(f"unknown baseline {baseline!r}")
    if z_threshold <= 0:
        raise ValueError("z_threshold must be > 0")
    x = series.values
    ok = ~np.isnan(x)
    if baseline == GLOBAL:
        if not ok.any():
            raise DataError("series has no data")
        mu = np.full(len(x), x[ok].mean())
        sd = np.full(len(x), x[ok].std())
        if sd[0] == 0.0:
            raise DataError("constant series has no anomaly baseline")
    else:
        profile = typical_day(series)
        slots, _ = _slot_indices(series)
        if np.nanmax(profile.slot_stddev) == 0.0 or not ok.any():
            raise DataError("constant series has no anomaly baseline")
        mu = profile.slot_means[slots]
        sd = profile.slot_stddev[slots]

    out: list[Anomaly] = []
    times = series.times()
    for i in np.flatnonzero(ok):
        if np.isnan(sd[i]) or sd[i] == 0.0:
            continue
        z = (x[i] - mu[i]) / sd[i]
        if abs(z) >= z_threshold:
            out.append(
                Anomaly(float(times[i]), series.channel, float(x[i]), float(z),
                        SPIKE if z > 0 else DROP)
            )
    return out


def _aligned(a: Series, b: Series) -> None:
    if (a.start, a.step, len(a)) != (b.start, b.step, len(b)):
        raise ValueError("series grids are not aligned")


def _pearson_arrays(xa: np.ndarray, xb: np.ndarray) -> float:
    mask = ~np.isnan(xa) & ~np.isnan(xb)
    if mask.sum() < 3:
        raise DataError("need at least 3 mutually present samples")
    ya, yb = xa[mask], xb[mask]
    da, db = ya - ya.mean(), yb - yb.mean()
    va, vb = float(np.dot(da, da)), float(np.dot(db, db))
    if va == 0.0 or vb == 0.0:
        raise DataError("zero variance in correlation window")
    return float(np.dot(da, db) / math.sqrt(va * vb))


def pearson(a: Series, b: Series) -> float:
    """Pearson product-moment correlation over mutually present samples."""
    _aligned(a, b)
    return _pearson_arrays(a.values, b.values)


def lag_curve(a: Series, b: Series, max_lag: float) -> list[tuple[float, float]]:
    """Pearson r between a(t) and b(t+lag) for every integer-step lag in
    [-max_lag, max_lag]; lags without enough overlap are omitted."""
    _aligned(a, b)
    n = len(a)
    span = n * a.step
    if not 0 < max_lag < span / 2:
        raise DataError(f"max_lag must be in (0, span/2={span / 2})")
    lag_max = int(max_lag // a.step)
    curve = []
    for k in range(-lag_max, lag_max + 1):
        if k >= 0:
            xa, xb = a.values[: n - k], b.values[k:]
        else:
            xa, xb = a.values[-k:], b.values[: n + k]
        try:
            curve.append((k * a.step, _pearson_arrays(xa, xb)))
        except DataError:
            continue
    return curve


def cross_correlation(a: Series, b: Series, max_lag: float) -> tuple[float, float]:
    """Lag (seconds) of ``b`` relative to ``a`` that maximizes Pearson r.

    Positive lag means ``b`` trails ``a``; ties resolve toward the
    smallest |lag| (negative first).
    """
    curve = lag_curve(a, b, max_lag)
    if not curve:
        raise DataError("no lag had enough overlapping data")
    best = None
    for lag, r in sorted(curve, key=lambda lr: (abs(lr[0]), lr[0])):
        if best is None or r > best[1]:
            best = (lag, r)
    return best


def wrap_half_day(hours: float) -> float:
    """Wrap an hour offset into (-12, 12]."""
    h = math.fmod(hours, 24.0)
    if h > 12.0:
        h -= 24.0
    elif h <= -12.0:
        h += 24.0
    return h


def daily_peak_offset(a: Series, b: Series) -> float:
    """Circular mean over days of (hour of b's daily max - hour of a's)."""
    _aligned(a, b)
    if len(a) * a.step < 2 * DAY_S:
        raise DataError("need at least two full days")
    t = a.times()
    day_ids = (t // DAY_S).astype(np.int64)
    angles = []
    for d in sorted(set(day_ids.tolist())):
        sel = day_ids == d
        if float(t[sel][0]) % DAY_S != 0.0 or sel.sum() * a.step != DAY_S:
            continue  # only complete days
        xa, xb = a.values[sel], b.values[sel]
        if np.isnan(xa).all() or np.isnan(xb).all():
            continue
        ha = hour_of(t[sel][int(np.nanargmax(xa))])
        hb = hour_of(t[sel][int(np.nanargmax(xb))])
        angles.append(wrap_half_day(hb - ha) / 24.0 * 2.0 * math.pi)
    if not angles:
        raise DataError("no complete day with data in both series")
    mean_angle = math.atan2(
        float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles)))
    )
    return wrap_half_day(mean_angle * 24.0 / (2.0 * math.pi))


def hour_of(ts: float) -> float:
    return (ts % DAY_S) / HOUR_S


def hourly_mean(series: Series) -> Series:
    """Aggregate to a 1-hour grid by averaging present samples per hour."""
    if HOUR_S % series.step != 0:
        raise DataError(f"step {series.step}s does not divide an hour evenly")
    per = int(HOUR_S // series.step)
    n_hours = len(series) // per
    if n_hours == 0:
        raise DataError("series shorter than one hour")
    x = series.values[: n_hours * per].reshape(n_hours, per)
    ok = ~np.isnan(x)
    counts = ok.sum(axis=1)
    sums = np.where(ok, x, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return Series(series.channel, series.start, HOUR_S, means)


@dataclass
class CorrelationReport:
    pearson_r: float
    best_lag_s: float
    r_at_best_lag: float
    daily_peak_offset_h: float

    def to_dict(self) -> dict:
        return {
            "pearson_r": self.pearson_r,
            "best_lag_s": self.best_lag_s,
            "r_at_best_lag": self.r_at_best_lag,
            "daily_peak_offset_h": self.daily_peak_offset_h,
        }


def correlation_report(
    a: Series, b: Series, max_lag: float = 6 * HOUR_S, hourly: bool = True
) -> CorrelationReport:
    """Bundle the three correlation views for a channel pair.

    Pearson r and the best lag are computed on hourly means by default
    (damps sensor noise); the daily peak offset uses the raw grid.
    """
    ca, cb = (hourly_mean(a), hourly_mean(b)) if hourly else (a, b)
    r = pearson(ca, cb)
    lag, r_lag = cross_correlation(ca, cb, max_lag)
    offset = daily_peak_offset(a, b)
    return CorrelationReport(r, lag, r_lag, offset)
