"""Outage detector vs. a straight-line oracle, statistics, attribution."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_series, voltage_series
from mgi.errors import DataError
from mgi.outage import (
    AttributionConfig,
    CauseLabel,
    OutageEpisode,
    attribute_cause,
    detect_outages,
    episode_hours,
    outage_stats,
)
from mgi.telemetry import Channel, Series, TelemetryFrame

HOUR = 3600.0


def oracle_episodes(values, start, step, cutoff, rearm, min_duration):
    """Independent reference: explicit per-sample state machine, then a
    merge pass, then the minimum-duration filter."""
    n = len(values)
    runs = []
    state = "up"
    first = last = None
    gap_started = None
    for i in range(n):
        v = values[i]
        if math.isnan(v):
            if state == "down":
                if gap_started is None:
                    gap_started = i
                if (i - gap_started + 1) * step >= min_duration:
                    runs.append((first, last))
                    state, first, last, gap_started = "up", None, None, None
            continue
        if state == "down":
            gap_started = None
            if v >= rearm:
                runs.append((first, last))
                state, first, last = "up", None, None
            else:
                last = i
        elif v < cutoff:
            state = "down"
            first = last = i
    if state == "down":
        runs.append((first, last))

    changed = True
    while changed:
        changed = False
        for j in range(len(runs) - 1):
            if (runs[j + 1][0] - runs[j][1] - 1) * step < min_duration:
                runs[j] = (runs[j][0], runs[j + 1][1])
                del runs[j + 1]
                changed = True
                break

    episodes = []
    for a, b in runs:
        if (b - a + 1) * step >= min_duration:
            window = values[a : b + 1]
            mv = float(np.nanmin(window))
            episodes.append(OutageEpisode(start + a * step, start + (b + 1) * step, mv))
    return episodes


def test_constant_above_cutoff_has_no_episodes():
    assert detect_outages(voltage_series(np.full(144, 48.0))) == []


def test_single_dip_duration():
    vals = np.full(144, 48.0)
    vals[12:33] = 42.0  # 02:00 .. 05:20 on a 10-minute midnight-aligned grid
    (ep,) = detect_outages(voltage_series(vals))
    assert ep.start == 12 * 600.0
    assert ep.end == 33 * 600.0
    assert ep.duration == pytest.approx(3.5 * HOUR)
    assert ep.min_voltage == 42.0


def test_two_short_dips():
    vals = np.full(144, 48.0)
    vals[10:12] = 42.5
    vals[60:64] = 41.0
    eps = detect_outages(voltage_series(vals), min_duration=20 * 60.0)
    assert [e.duration for e in eps] == [pytest.approx(1200.0), pytest.approx(2400.0)]


def test_single_sample_glitch_discarded():
    vals = np.full(144, 48.0)
    vals[50] = 40.0
    assert detect_outages(voltage_series(vals), min_duration=20 * 60.0) == []


def test_hysteresis_keeps_episode_open_below_rearm():
    vals = np.full(50, 48.0)
    vals[10:13] = 42.0
    vals[13:20] = 43.5  # above cutoff but below the 44.0 re-arm level
    vals[20] = 45.0
    (ep,) = detect_outages(voltage_series(vals), min_duration=1200.0)
    assert ep.start == 10 * 600.0
    assert ep.end == 20 * 600.0


def test_short_gap_does_not_split():
    vals = np.full(60, 48.0)
    vals[10:14] = 42.0
    vals[14] = np.nan
    vals[15:19] = 42.0
    (ep,) = detect_outages(voltage_series(vals), min_duration=1200.0)
    assert ep.start == 10 * 600.0 and ep.end == 19 * 600.0


def test_long_gap_splits():
    vals = np.full(80, 48.0)
    vals[10:14] = 42.0
    vals[14:40] = np.nan
    vals[40:44] = 42.0
    eps = detect_outages(voltage_series(vals), min_duration=1200.0)
    assert len(eps) == 2
    assert eps[0].end == 14 * 600.0
    assert eps[1].start == 40 * 600.0


def test_blip_recovery_within_min_duration_merges():
    vals = np.full(60, 48.0)
    vals[10:14] = 42.0
    vals[14] = 46.0  # one good sample, shorter than min_duration
    vals[15:19] = 42.0
    (ep,) = detect_outages(voltage_series(vals), min_duration=1200.0)
    assert ep.start == 10 * 600.0 and ep.end == 19 * 600.0


def test_wrong_channel_rejected():
    s = make_series(Channel.LOAD_POWER, np.ones(10))
    with pytest.raises(ValueError):
        detect_outages(s)


@st.composite
def _voltage_case(draw):
    n = draw(st.integers(5, 400))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    vals = 43.0 + np.cumsum(rng.normal(0.0, 0.4, n)) + rng.normal(0, 1.5, n)
    vals = np.clip(vals, 35.0, 55.0)
    gap_frac = draw(st.sampled_from([0.0, 0.05, 0.2]))
    if gap_frac:
        mask = rng.uniform(size=n) < gap_frac
        vals[mask] = np.nan
    cutoff = draw(st.sampled_from([42.0, 43.0, 44.0]))
    rearm = cutoff + draw(st.sampled_from([0.0, 1.0, 2.5]))
    min_dur = draw(st.sampled_from([600.0, 1200.0, 3600.0]))
    return vals, cutoff, rearm, min_dur


@given(_voltage_case())
@settings(max_examples=120, deadline=None)
def test_detector_matches_oracle(case):
    vals, cutoff, rearm, min_dur = case
    s = voltage_series(vals)
    got = detect_outages(s, cutoff=cutoff, min_duration=min_dur, rearm=rearm)
    want = oracle_episodes(vals, s.start, s.step, cutoff, rearm, min_dur)
    assert got == want


@given(st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_total_duration_monotone_in_cutoff(seed):
    rng = np.random.default_rng(seed)
    vals = 44.0 + np.cumsum(rng.normal(0.0, 0.3, 300))
    s = voltage_series(np.clip(vals, 35, 55))
    total = []
    for cutoff in (41.0, 43.0, 45.0):
        eps = detect_outages(s, cutoff=cutoff, min_duration=1200.0)
        total.append(sum(e.duration for e in eps))
    assert total[0] <= total[1] <= total[2]


def test_episodes_disjoint_and_separated():
    rng = np.random.default_rng(13)
    vals = 43.5 + np.cumsum(rng.normal(0, 0.5, 1000))
    s = voltage_series(np.clip(vals, 35, 55))
    eps = detect_outages(s, min_duration=1800.0)
    for a, b in zip(eps, eps[1:]):
        assert b.start - a.end >= 1800.0


def test_stats_empty():
    stats = outage_stats([], (0.0, 86400.0))
    assert stats.hour_histogram == [0] * 24
    assert stats.outage_fraction == 0.0


def test_stats_six_hours_in_a_day():
    ep = OutageEpisode(2 * HOUR, 8 * HOUR, 42.0)
    stats = outage_stats([ep], (0.0, 86400.0))
    assert stats.outage_fraction == pytest.approx(0.25)
    assert stats.hour_histogram[2:8] == [1] * 6
    assert sum(stats.hour_histogram) == 6


def test_stats_midnight_wrap():
    ep = OutageEpisode(23.5 * HOUR, 24.5 * HOUR, 42.0)
    stats = outage_stats([ep], (0.0, 2 * 86400.0))
    assert stats.hour_histogram[23] == 1
    assert stats.hour_histogram[0] == 1


def test_episode_hours_exact_boundary_exclusive():
    assert episode_hours(OutageEpisode(2 * HOUR, 3 * HOUR, 42.0)) == {2}


def test_stats_rejects_outside_span():
    ep = OutageEpisode(2 * HOUR, 8 * HOUR, 42.0)
    with pytest.raises(DataError):
        outage_stats([ep], (4 * HOUR, 86400.0))


def test_histogram_counts_episodes_not_samples():
    eps = [
        OutageEpisode(3 * HOUR, 3.5 * HOUR, 42.0),
        OutageEpisode(86400 + 3 * HOUR, 86400 + 4 * HOUR, 41.0),
    ]
    stats = outage_stats(eps, (0.0, 2 * 86400.0))
    assert stats.hour_histogram[3] == 2


@given(st.lists(st.tuples(st.floats(600, 9000), st.floats(600, 9000)), max_size=8))
@settings(max_examples=50)
def test_fraction_within_unit_interval(raw):
    eps, cursor = [], 0.0
    for gap, dur in raw:  # disjoint by construction, like detector output
        start = cursor + gap
        if start + dur > 86400.0:
            break
        eps.append(OutageEpisode(start, start + dur, 40.0))
        cursor = start + dur
    stats = outage_stats(eps, (0.0, 86400.0))
    assert 0.0 <= stats.outage_fraction <= 1.0 + 1e-12


# ---------------------------------------------------------------------------
# cause attribution

def _attribution_frame(
    wind_level=9.0, irr_peak=950.0, load_level=1.0, load_bump=None, jerk_at=None
):
    """Four days of 10-minute data; the outage of interest starts at the
    beginning of day 3 (72 h in)."""
    step = 600.0
    n = 4 * 144
    t = step * np.arange(n)
    hours = (t % 86400.0) / HOUR
    irr = np.where(
        (hours >= 6) & (hours <= 18),
        irr_peak * np.maximum(np.sin(np.pi * (hours - 6) / 12.0), 0.0),
        0.0,
    )
    wind = np.full(n, wind_level)
    load = np.full(n, load_level)
    if load_bump is not None:
        i0, i1, level = load_bump
        load[i0:i1] = level
    volt = np.full(n, 48.0)
    if jerk_at is not None:
        volt[jerk_at] = 44.0
    volt[3 * 144 : 3 * 144 + 12] = 42.0  # the episode itself
    series = {
        Channel.IRRADIANCE: Series(Channel.IRRADIANCE, 0.0, step, irr),
        Channel.WIND_SPEED: Series(Channel.WIND_SPEED, 0.0, step, wind),
        Channel.LOAD_POWER: Series(Channel.LOAD_POWER, 0.0, step, load),
        Channel.DC_VOLTAGE: Series(Channel.DC_VOLTAGE, 0.0, step, volt),
    }
    frame = TelemetryFrame(series)
    episode = OutageEpisode(3 * 86400.0, 3 * 86400.0 + 12 * 600.0, 42.0)
    return frame, episode


def test_low_resource_week_attributed():
    frame, ep = _attribution_frame(wind_level=2.0, irr_peak=500.0)
    out = attribute_cause(ep, frame)
    assert CauseLabel.LOW_PRIOR_RESOURCE in out.causes
    assert CauseLabel.COMBINATION not in out.causes
    assert out.evidence["mean_wind"] == pytest.approx(2.0)
    assert out.evidence["max_irradiance"] == pytest.approx(500.0)


def test_battery_fault_from_voltage_jerk():
    frame, ep = _attribution_frame(jerk_at=3 * 144 - 30)
    out = attribute_cause(ep, frame)
    assert out.causes == [CauseLabel.BATTERY_FAULT]
    assert out.evidence["voltage_jerk"] == pytest.approx(4.0)


def test_high_demand_before_outage():
    bump = (3 * 144 - 72, 3 * 144, 2.5)  # 12 h at 2.5 kW before the episode
    frame, ep = _attribution_frame(load_bump=bump)
    out = attribute_cause(ep, frame)
    assert CauseLabel.HIGH_PRIOR_DEMAND in out.causes


def test_combination_when_two_rules_fire():
    bump = (3 * 144 - 72, 3 * 144, 2.5)
    frame, ep = _attribution_frame(wind_level=2.0, irr_peak=400.0, load_bump=bump)
    out = attribute_cause(ep, frame)
    assert CauseLabel.LOW_PRIOR_RESOURCE in out.causes
    assert CauseLabel.HIGH_PRIOR_DEMAND in out.causes
    assert CauseLabel.COMBINATION in out.causes


def test_undetermined_when_nothing_fires():
    frame, ep = _attribution_frame()
    out = attribute_cause(ep, frame)
    assert out.causes == [CauseLabel.UNDETERMINED]
    assert set(out.evidence) == {
        "mean_wind", "max_irradiance", "mean_load", "load_threshold", "voltage_jerk",
    }


def test_insufficient_lookback_is_error():
    frame, _ = _attribution_frame()
    early = OutageEpisode(6 * HOUR, 7 * HOUR, 42.0)
    with pytest.raises(DataError):
        attribute_cause(early, frame)


def test_absolute_demand_threshold_override():
    bump = (3 * 144 - 72, 3 * 144, 2.5)
    frame, ep = _attribution_frame(load_bump=bump)
    config = AttributionConfig(demand_high_threshold=5.0)
    out = attribute_cause(ep, frame, config)
    assert CauseLabel.HIGH_PRIOR_DEMAND not in out.causes
