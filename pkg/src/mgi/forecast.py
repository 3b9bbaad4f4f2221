"""Harmonic forecasting of resources and demand, plus outage-risk alerts.

Resources and load carry strong 24 h and 12 h cycles, so forecasting is
a least-squares fit of mean plus fixed-period cosines; alerting runs the
energy-balance simulator over the forecasts and searches for the least
load shedding that keeps the bus above cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .outage import OutageEpisode
from .simgrid import BatteryState, MicrogridConfig, simulate
from .telemetry import HOUR_S, Channel, Series, format_timestamp

#: Shed recommendations are reported on this grid (kW).
SHED_QUANTUM_KW = 0.01


def wrap_phase(phi: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    phi = math.fmod(phi, 2.0 * math.pi)
    if phi > math.pi:
        phi -= 2.0 * math.pi
    elif phi <= -math.pi:
        phi += 2.0 * math.pi
    return phi


@dataclass(frozen=True)
class HarmonicModel:
    """mean + sum_i amplitude_i * cos(2*pi*t/period_i + phase_i), with t in
    epoch seconds, so phases are absolute and prediction is origin-free."""

    channel: Channel
    mean: float
    components: tuple[tuple[float, float, float], ...]  # (period h, amplitude, phase rad)
    residual_rms: float

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        y = np.full(len(times), self.mean)
        for period_h, amp, phase in self.components:
            period_s = period_h * HOUR_S
            angle = 2.0 * np.pi * np.mod(times, period_s) / period_s + phase
            y = y + amp * np.cos(angle)
        return y

    def to_dict(self) -> dict:
        return {
            "channel": self.channel.key,
            "mean": self.mean,
            "components": [
                {"period_hours": p, "amplitude": a, "phase_rad": ph}
                for p, a, ph in self.components
            ],
            "residual_rms": self.residual_rms,
        }


def fit_harmonic(series: Series, periods_h: tuple[float, ...] = (24.0, 12.0)) -> HarmonicModel:
    """Least-squares harmonic fit at fixed periods via the normal
    equations of the cos/sin basis.

    Requires a gap-free series spanning at least twice the longest
    period; duplicate or non-positive periods are rejected as rank
    deficient.
    """
    if not periods_h:
        raise ValueError("need at least one period")
    if len(set(periods_h)) != len(periods_h) or any(p <= 0 for p in periods_h):
        raise DataError("periods must be distinct and positive")
    x = series.values
    if np.isnan(x).any():
        raise DataError("series has gaps; fill or drop them before fitting")
    span = len(series) * series.step
    if span < 2.0 * max(periods_h) * HOUR_S:
        raise DataError(
            f"series spans {span}s; need at least twice the longest period"
        )

    tau = series.step * np.arange(len(series))
    cols = [np.ones(len(series))]
    for p in periods_h:
        w = 2.0 * np.pi / (p * HOUR_S)
        cols.append(np.cos(w * tau))
        cols.append(np.sin(w * tau))
    basis = np.column_stack(cols)
    gram = basis.T @ basis
    try:
        coef = np.linalg.solve(gram, basis.T @ x)
    except np.linalg.LinAlgError:
        raise DataError("harmonic basis is rank deficient") from None

    components = []
    for i, p in enumerate(periods_h):
        c, s = coef[1 + 2 * i], coef[2 + 2 * i]
        amp = math.hypot(c, s)
        psi = math.atan2(-s, c)  # phase relative to the series start
        phase = wrap_phase(psi - 2.0 * math.pi * series.start / (p * HOUR_S))
        components.append((float(p), float(amp), float(phase)))
    residual = x - basis @ coef
    rms = float(np.sqrt(np.mean(residual**2)))
    return HarmonicModel(series.channel, float(coef[0]), tuple(components), rms)


def predict(model: HarmonicModel, from_ts: float, horizon_s: float, step: float) -> Series:
    """Evaluate the model on a fresh grid covering [from_ts, from_ts+horizon).

    Predictions for non-negative channels are clamped at zero.
    """
    if horizon_s <= 0:
        raise ValueError("horizon must be > 0")
    if step <= 0:
        raise ValueError("step must be > 0")
    n = max(1, math.ceil(horizon_s / step - 1e-9))
    times = from_ts + step * np.arange(n)
    y = model.evaluate(times)
    if model.channel.non_negative:
        y = np.maximum(y, 0.0)
    return Series(model.channel, from_ts, step, y)


@dataclass(frozen=True)
class OutageAlert:
    predicted_outage_start: float
    predicted_min_voltage: float
    deficit_energy_kwh: float
    recommended_shed_kw: float

    def to_dict(self) -> dict:
        return {
            "predicted_outage_start": format_timestamp(self.predicted_outage_start),
            "predicted_min_voltage": self.predicted_min_voltage,
            "deficit_energy_kwh": self.deficit_energy_kwh,
            "recommended_shed_kw": self.recommended_shed_kw,
        }

    def render(self) -> str:
        return (
            f"ALERT {format_timestamp(self.predicted_outage_start)} "
            f"shed {self.recommended_shed_kw:.2f} kW"
        )


def _shed_series(load: Series, shed_kw: float) -> Series:
    return load.with_values(np.maximum(load.values - shed_kw, 0.0))


def outage_risk(
    irradiance_fc: Series,
    wind_fc: Series,
    load_fc: Series,
    battery: BatteryState,
    config: MicrogridConfig = MicrogridConfig(),
    horizon_s: float | None = None,
) -> list[OutageAlert]:
    """Predict cutoff crossings over the forecast horizon.

    Runs the energy-balance stepper over the forecast series.  Each
    predicted outage yields one alert; all alerts carry the same
    recommended shed, the smallest constant load reduction (in steps of
    0.01 kW) that keeps the predicted voltage above cutoff over the whole
    horizon.  If even a full shed cannot prevent a crossing (e.g. the
    bank starts below cutoff), the full-shed value is reported.
    """
    if horizon_s is not None:
        n = max(1, math.ceil(horizon_s / load_fc.step - 1e-9))
        if n < len(load_fc):
            irradiance_fc = _truncate(irradiance_fc, n)
            wind_fc = _truncate(wind_fc, n)
            load_fc = _truncate(load_fc, n)

    def episodes_at(shed_kw: float) -> tuple[list[OutageEpisode], "np.ndarray"]:
        result = simulate(
            config, irradiance_fc, wind_fc, _shed_series(load_fc, shed_kw),
            initial=battery,
        )
        return result.truth_outages, result.frame[Channel.DC_VOLTAGE].values

    episodes, _ = episodes_at(0.0)
    if not episodes:
        return []

    hi = math.ceil(float(np.max(load_fc.values)) / SHED_QUANTUM_KW)
    if episodes_at(hi * SHED_QUANTUM_KW)[0]:
        shed = hi * SHED_QUANTUM_KW  # unpreventable; report full shed
    else:
        lo = 0
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if episodes_at(mid * SHED_QUANTUM_KW)[0]:
                lo = mid
            else:
                hi = mid
        shed = hi * SHED_QUANTUM_KW

    dt_h = load_fc.step / HOUR_S
    times = load_fc.times()
    alerts = []
    for ep in episodes:
        mask = (times >= ep.start) & (times < ep.end)
        deficit = float(np.sum(load_fc.values[mask]) * dt_h)
        alerts.append(OutageAlert(ep.start, ep.min_voltage, deficit, shed))
    return alerts


def _truncate(s: Series, n: int) -> Series:
    return Series(s.channel, s.start, s.step, s.values[:n], s.filled)
