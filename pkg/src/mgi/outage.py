"""Outage detection from battery DC voltage, outage statistics, and
attribution of outage causes from the telemetry preceding each episode.

The system is off while the bus voltage sits below the cutoff (43 V by
default) and stays off until it recovers past a re-arm level, so the
detector is a hysteresis state machine rather than a plain threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .telemetry import DAY_S, HOUR_S, Channel, Series, TelemetryFrame, format_timestamp


@dataclass(frozen=True)
class OutageEpisode:
    """Maximal interval [start, end) during which the system is off."""

    start: float
    end: float
    min_voltage: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("episode needs start < end")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "min_voltage": self.min_voltage,
        }


def detect_outages(
    voltage: Series,
    cutoff: float = 43.0,
    min_duration: float = 1200.0,
    rearm: float | None = None,
) -> list[OutageEpisode]:
    """Find outage episodes in a DC-voltage series.

    An episode opens at a sample below ``cutoff`` and stays open while
    samples remain below ``rearm`` (default ``cutoff + 1.0``, the
    controller's re-arm hysteresis).  Interior gaps shorter than
    ``min_duration`` do not split an episode, and episodes separated by
    less than ``min_duration`` are merged, so surviving episodes are
    disjoint with at least ``min_duration`` between them.  Episodes
    shorter than ``min_duration`` are discarded.
    """
    if voltage.channel is not Channel.DC_VOLTAGE:
        raise ValueError(f"need a DC voltage series, got {voltage.channel}")
    if rearm is None:
        rearm = cutoff + 1.0
    if rearm < cutoff:
        raise ValueError("rearm must be >= cutoff")
    x = voltage.values
    step = voltage.step
    t0 = voltage.start

    raw: list[tuple[int, int, float]] = []  # (first sample, last sample, min V)
    start_i = last_i = -1
    min_v = math.inf
    gap_run = 0
    in_ep = False
    for i, v in enumerate(x):
        if not in_ep:
            if not math.isnan(v) and v < cutoff:
                in_ep = True
                start_i = last_i = i
                min_v = v
                gap_run = 0
        elif math.isnan(v):
            gap_run += 1
            if gap_run * step >= min_duration:
                raw.append((start_i, last_i, min_v))
                in_ep = False
        elif v < rearm:
            last_i = i
            gap_run = 0
            min_v = min(min_v, v)
        else:
            raw.append((start_i, last_i, min_v))
            in_ep = False
    if in_ep:
        raw.append((start_i, last_i, min_v))

    merged: list[list] = []
    for s, e, mv in raw:
        if merged and (s - merged[-1][1] - 1) * step < min_duration:
            merged[-1][1] = e
            merged[-1][2] = min(merged[-1][2], mv)
        else:
            merged.append([s, e, mv])

    episodes = []
    for s, e, mv in merged:
        duration = (e - s + 1) * step
        if duration >= min_duration:
            episodes.append(OutageEpisode(t0 + s * step, t0 + (e + 1) * step, mv))
    return episodes


@dataclass
class OutageStats:
    episodes: list[OutageEpisode]
    hour_histogram: list[int]  # episodes intersecting each hour-of-day
    outage_fraction: float

    def to_dict(self) -> dict:
        return {
            "episodes": [ep.to_dict() for ep in self.episodes],
            "hour_histogram": self.hour_histogram,
            "outage_fraction": self.outage_fraction,
        }

    def histogram_rows(self) -> list[tuple[int, int]]:
        return list(enumerate(self.hour_histogram))


def episode_hours(episode: OutageEpisode) -> set[int]:
    """Hours of day that the interval [start, end) intersects."""
    if episode.duration >= DAY_S:
        return set(range(24))
    first = math.floor(episode.start / HOUR_S)
    last = math.ceil(episode.end / HOUR_S) - 1
    return {int(h % 24) for h in range(first, last + 1)}


def outage_stats(episodes: Sequence[OutageEpisode], span: tuple[float, float]) -> OutageStats:
    """Hour-of-day histogram of episode occurrences plus outage fraction.

    ``hour_histogram[h]`` counts episodes whose interval intersects clock
    hour ``h``; an episode spanning several hours counts once in each.
    """
    span_start, span_end = span
    if not span_start < span_end:
        raise ValueError("span needs start < end")
    hist = [0] * 24
    total = 0.0
    for ep in episodes:
        if ep.start < span_start or ep.end > span_end:
            raise DataError(f"episode {ep} outside analyzed span")
        for h in episode_hours(ep):
            hist[h] += 1
        total += ep.duration
    return OutageStats(list(episodes), hist, total / (span_end - span_start))


class CauseLabel(str, Enum):
    LOW_PRIOR_RESOURCE = "low_prior_resource"
    HIGH_PRIOR_DEMAND = "high_prior_demand"
    BATTERY_FAULT = "battery_fault"
    COMBINATION = "combination"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class AttributionConfig:
    """Thresholds for the four outage-cause rules; all configurable."""

    lookback_resource_s: float = 48 * HOUR_S
    wind_low_threshold: float = 5.0  # m/s mean over the lookback
    irradiance_low_threshold: float = 700.0  # W/m^2 daily max
    lookback_demand_s: float = 12 * HOUR_S
    demand_high_factor: float = 1.5  # x mean load of the whole frame
    demand_high_threshold: float | None = None  # absolute kW override
    lookback_fault_s: float = 24 * HOUR_S
    voltage_jerk_threshold: float = 2.0  # V per sample step


@dataclass
class CauseAttribution:
    episode: OutageEpisode
    causes: list[CauseLabel]
    evidence: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "episode": self.episode.to_dict(),
            "causes": [c.value for c in self.causes],
            "evidence": self.evidence,
        }


def _window(series: Series, end_ts: float, length_s: float) -> np.ndarray:
    i1 = int(round((end_ts - series.start) / series.step))
    i0 = int(round((end_ts - length_s - series.start) / series.step))
    if i0 < 0 or i1 > len(series):
        raise DataError("frame does not cover the attribution lookback window")
    vals = series.values[i0:i1]
    if vals.size == 0 or np.isnan(vals).all():
        raise DataError("no usable samples in lookback window")
    return vals


def attribute_cause(
    episode: OutageEpisode,
    frame: TelemetryFrame,
    config: AttributionConfig = AttributionConfig(),
) -> CauseAttribution:
    """Label one outage episode with its plausible cause(s).

    Low prior resource: lookback mean wind below threshold and lookback
    peak irradiance below threshold.  High prior demand: lookback mean
    load above threshold.  Battery fault: an abrupt step in the
    pre-outage voltage trace.  Two or more of those add ``combination``;
    none at all yields ``undetermined``.  Evidence scalars are reported
    either way.
    """
    wind = _window(frame[Channel.WIND_SPEED], episode.start, config.lookback_resource_s)
    irr = _window(frame[Channel.IRRADIANCE], episode.start, config.lookback_resource_s)
    load = _window(frame[Channel.LOAD_POWER], episode.start, config.lookback_demand_s)
    volt = _window(frame[Channel.DC_VOLTAGE], episode.start, config.lookback_fault_s)

    mean_wind = float(np.nanmean(wind))
    max_irr = float(np.nanmax(irr))
    mean_load = float(np.nanmean(load))
    if config.demand_high_threshold is not None:
        load_threshold = config.demand_high_threshold
    else:
        frame_load = frame[Channel.LOAD_POWER].values
        if np.isnan(frame_load).all():
            raise DataError("load channel has no data to set a demand threshold")
        load_threshold = config.demand_high_factor * float(np.nanmean(frame_load))
    dv = np.abs(np.diff(volt))
    dv = dv[~np.isnan(dv)]
    jerk = float(dv.max()) if dv.size else 0.0

    causes: list[CauseLabel] = []
    if mean_wind < config.wind_low_threshold and max_irr < config.irradiance_low_threshold:
        causes.append(CauseLabel.LOW_PRIOR_RESOURCE)
    if mean_load > load_threshold:
        causes.append(CauseLabel.HIGH_PRIOR_DEMAND)
    if jerk > config.voltage_jerk_threshold:
        causes.append(CauseLabel.BATTERY_FAULT)
    if len(causes) >= 2:
        causes.append(CauseLabel.COMBINATION)
    if not causes:
        causes.append(CauseLabel.UNDETERMINED)

    evidence = {
        "mean_wind": mean_wind,
        "max_irradiance": max_irr,
        "mean_load": mean_load,
        "load_threshold": load_threshold,
        "voltage_jerk": jerk,
    }
    return CauseAttribution(episode, causes, evidence)
