"""Discrete-time energy-balance simulator of an islanded PV-wind-battery
microgrid (6 kWp PV, two 3 kW turbines, 38.4 kWh lead-acid bank on a
48 Vdc bus behind 2x4 kW inverters, 43 V load cutoff).

The simulator produces labeled telemetry in the same shape the analysis
pipeline ingests, so detector output can be checked against ground
truth.  The battery voltage map is a linear lead-acid proxy anchored so
the 43 V cutoff sits at the bank's usable depth-of-discharge, which
keeps cutoff crossings analytically computable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .outage import OutageEpisode
from .telemetry import DAY_S, HOUR_S, Channel, Series, TelemetryFrame, parse_timestamp

try:  # stdlib on 3.11+, backport below
    import tomllib as _toml
except ImportError:  # pragma: no cover
    import tomli as _toml

#: Default scenario origin: 2021-01-01 00:00 local standard time.
DEFAULT_START = parse_timestamp("2021-01-01T00:00:00")


@dataclass(frozen=True)
class MicrogridConfig:
    pv_kwp: float = 6.0
    pv_derate: float = 0.85
    n_turbines: int = 2
    turbine_rated_kw: float = 3.0
    cut_in: float = 3.0  # m/s
    rated_speed: float = 12.0
    cut_out: float = 25.0
    battery_kwh: float = 38.4
    usable_depth: float = 0.5
    eta_charge: float = 0.90
    eta_discharge: float = 0.95
    inverter_limit_kw: float = 8.0  # both units combined
    bus_nominal_v: float = 48.0
    cutoff_v: float = 43.0
    rearm_v: float = 44.0
    ocv_full_v: float = 51.0  # open-circuit voltage at soc 1
    ocv_floor_v: float = 43.2  # open-circuit voltage at the usable-depth floor
    volt_per_kw: float = 0.125  # terminal shift per kW of battery flow

    def __post_init__(self):
        if not (0 <= self.cut_in < self.rated_speed < self.cut_out):
            raise ConfigError("need 0 <= cut_in < rated_speed < cut_out")
        if not 0 < self.usable_depth <= 1:
            raise ConfigError("usable_depth must be in (0, 1]")
        if not self.cutoff_v < self.rearm_v < self.ocv_full_v:
            raise ConfigError("need cutoff_v < rearm_v < ocv_full_v")
        if self.ocv_floor_v >= self.ocv_full_v:
            raise ConfigError("voltage map must rise with soc")
        for name in ("pv_kwp", "pv_derate", "turbine_rated_kw", "battery_kwh",
                     "eta_charge", "eta_discharge", "inverter_limit_kw"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.n_turbines < 0:
            raise ConfigError("n_turbines must be >= 0")

    @property
    def soc_floor(self) -> float:
        return 1.0 - self.usable_depth

    def ocv(self, soc: float) -> float:
        """Open-circuit voltage; linear in soc, extended below the floor."""
        slope = (self.ocv_full_v - self.ocv_floor_v) / self.usable_depth
        return self.ocv_floor_v + slope * (soc - self.soc_floor)

    def soc_from_ocv(self, voltage: float) -> float:
        slope = (self.ocv_full_v - self.ocv_floor_v) / self.usable_depth
        return self.soc_floor + (voltage - self.ocv_floor_v) / slope

    def terminal_voltage(self, soc: float, battery_kw: float) -> float:
        """Bus voltage at the given battery power (+ charging, - discharging)."""
        return self.ocv(soc) + self.volt_per_kw * battery_kw


@dataclass(frozen=True)
class BatteryState:
    soc: float  # fraction of total capacity in [0, 1]
    terminal_v: float
    online: bool  # False while the low-voltage cutoff holds the loads off

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError("soc must be within [0, 1]")


def initial_state(config: MicrogridConfig, soc: float = 1.0, online: bool = True) -> BatteryState:
    return BatteryState(soc, config.terminal_voltage(soc, 0.0), online)


def pv_power(irradiance: float, config: MicrogridConfig) -> float:
    """Array output in kW for a global-horizontal irradiance in W/m^2."""
    if irradiance < 0:
        raise ValueError("irradiance must be >= 0")
    return min(config.pv_kwp, config.pv_kwp * (irradiance / 1000.0) * config.pv_derate)


def wind_power(speed: float, config: MicrogridConfig) -> float:
    """Combined turbine output in kW; cubic between cut-in and rated."""
    if speed < 0:
        raise ValueError("wind speed must be >= 0")
    rated = config.n_turbines * config.turbine_rated_kw
    if speed < config.cut_in or speed > config.cut_out:
        return 0.0
    if speed >= config.rated_speed:
        return rated
    ci3 = config.cut_in**3
    return rated * (speed**3 - ci3) / (config.rated_speed**3 - ci3)


def _battery_transition(
    soc: float, online: bool, net_kw: float, dt_s: float, config: MicrogridConfig
) -> tuple[float, float, bool, float, float]:
    """Advance the bank one step; returns (soc', terminal_v, online',
    battery_kw, dump_kw).  ``net_kw`` is bus surplus (+) or deficit (-)."""
    dt_h = dt_s / HOUR_S
    cap = config.battery_kwh
    if net_kw >= 0.0:
        headroom_kwh = (1.0 - soc) * cap
        p_max = headroom_kwh / (config.eta_charge * dt_h)
        battery_kw = min(net_kw, p_max)
        dump_kw = net_kw - battery_kw
        delta_kwh = config.eta_charge * battery_kw * dt_h
    else:
        avail_kw = soc * cap * config.eta_discharge / dt_h
        battery_kw = -min(-net_kw, avail_kw)
        dump_kw = 0.0
        delta_kwh = battery_kw * dt_h / config.eta_discharge
    soc2 = min(1.0, max(0.0, soc + delta_kwh / cap))
    terminal = config.terminal_voltage(soc2, battery_kw)
    if online and terminal < config.cutoff_v:
        online2 = False
    elif not online and terminal >= config.rearm_v:
        online2 = True
    else:
        online2 = online
    return soc2, terminal, online2, battery_kw, dump_kw


def battery_step(
    state: BatteryState, net_power_kw: float, dt_s: float, config: MicrogridConfig
) -> BatteryState:
    """Saturating state-of-charge update with the online/offline latch.

    Charging applies ``eta_charge``; discharging drains ``1/eta_discharge``
    per delivered kWh.  The latch opens when the terminal voltage falls
    below the cutoff and closes once it recovers past the re-arm level.
    """
    if dt_s <= 0:
        raise ValueError("dt must be > 0")
    soc2, terminal, online2, _, _ = _battery_transition(
        state.soc, state.online, net_power_kw, dt_s, config
    )
    return BatteryState(soc2, terminal, online2)


@dataclass(frozen=True, eq=False)
class SimResult:
    frame: TelemetryFrame
    truth_outages: list[OutageEpisode]
    dump_load_active: np.ndarray  # bool per sample
    inverter_clipped: np.ndarray  # bool per sample
    soc: np.ndarray
    pv_kw: np.ndarray
    wind_kw: np.ndarray
    delivered_kw: np.ndarray
    dump_kw: np.ndarray

    def truth_dict(self) -> dict:
        return {
            "outages": [ep.to_dict() for ep in self.truth_outages],
            "dump_load_active": [int(v) for v in self.dump_load_active],
            "inverter_clipped": [int(v) for v in self.inverter_clipped],
        }


def simulate(
    config: MicrogridConfig,
    irradiance: Series,
    wind: Series,
    demand: Series,
    initial: BatteryState | None = None,
    period_label: str = "simulated",
) -> SimResult:
    """Step the energy balance over aligned input series.

    Per step: generation = PV + wind; while online the delivered load is
    min(demand, inverter limit, what bus plus battery can supply), and
    while offline it is zero (charging continues).  Surplus beyond what
    the bank can accept goes to the dump load.  Recorded voltage is the
    battery terminal voltage, also while offline, and the truth outage
    list marks exactly the samples with the latch open.
    """
    for s in (irradiance, wind, demand):
        if (s.start, s.step, len(s)) != (irradiance.start, irradiance.step, len(irradiance)):
            raise DataError("simulation inputs must share one grid")
        if s.has_gaps():
            raise DataError("simulation inputs may not contain gaps")
    if irradiance.channel is not Channel.IRRADIANCE or wind.channel is not Channel.WIND_SPEED:
        raise ValueError("weather inputs must be (irradiance, wind) series")
    if demand.channel is not Channel.LOAD_POWER:
        raise ValueError("demand input must be a load series")

    n = len(demand)
    step = demand.step
    dt_h = step / HOUR_S
    state = initial if initial is not None else initial_state(config)

    volt = np.empty(n)
    soc_arr = np.empty(n)
    pv_arr = np.empty(n)
    wind_arr = np.empty(n)
    delivered = np.empty(n)
    dump = np.empty(n)
    online_arr = np.empty(n, dtype=bool)
    clipped = np.zeros(n, dtype=bool)

    soc, online = state.soc, state.online
    for t in range(n):
        pv_kw = pv_power(float(irradiance.values[t]), config)
        w_kw = wind_power(float(wind.values[t]), config)
        gen = pv_kw + w_kw
        if online:
            want = float(demand.values[t])
            clipped[t] = want > config.inverter_limit_kw
            avail = gen + soc * config.battery_kwh * config.eta_discharge / dt_h
            served = min(want, config.inverter_limit_kw, avail)
        else:
            served = 0.0
        soc, terminal, online, _battery_kw, dump_kw = _battery_transition(
            soc, online, gen - served, step, config
        )
        volt[t] = terminal
        soc_arr[t] = soc
        pv_arr[t] = pv_kw
        wind_arr[t] = w_kw
        delivered[t] = served
        dump[t] = dump_kw
        online_arr[t] = online

    frame = TelemetryFrame(
        {
            Channel.IRRADIANCE: irradiance,
            Channel.WIND_SPEED: wind,
            Channel.LOAD_POWER: Series(Channel.LOAD_POWER, demand.start, step, delivered),
            Channel.DC_VOLTAGE: Series(Channel.DC_VOLTAGE, demand.start, step, volt),
        },
        period_label,
    )
    truth = _episodes_from_flags(online_arr, volt, demand.start, step)
    return SimResult(
        frame, truth, dump > 0.0, clipped, soc_arr, pv_arr, wind_arr, delivered, dump
    )


def _episodes_from_flags(
    online: np.ndarray, volt: np.ndarray, start: float, step: float
) -> list[OutageEpisode]:
    episodes = []
    i = 0
    n = len(online)
    while i < n:
        if not online[i]:
            j = i
            while j + 1 < n and not online[j + 1]:
                j += 1
            episodes.append(
                OutageEpisode(
                    start + i * step,
                    start + (j + 1) * step,
                    float(volt[i : j + 1].min()),
                )
            )
            i = j + 1
        else:
            i += 1
    return episodes


# ---------------------------------------------------------------------------
# synthetic inputs

@dataclass(frozen=True)
class WeatherParams:
    """Clear-sky half-sine irradiance with per-day cloudiness, plus a
    thermally driven wind: calm nights, a daytime arc peaking alongside
    solar noon, coupled to the same cloudiness.  The asymmetric daily
    arcs give both channels their strong 24 h and 12 h harmonics."""

    peak_irradiance: float = 1000.0  # W/m^2 at clear-sky solar noon
    sunrise_hour: float = 6.0
    daylight_hours: float = 12.0
    cloudiness: float | None = None  # fix the per-day factor; None = random
    cloud_depth: float = 0.85
    cloud_alpha: float = 1.5
    cloud_beta: float = 3.0
    wind_mean: float = 10.0  # long-run target, m/s
    wind_day_start_hour: float = 6.5
    wind_day_hours: float = 12.0  # arc peaks at start + half of this
    wind_arc_ratio: float = 2.0  # daytime arc amplitude over the night level
    wind_noise_sd: float = 0.6
    wind_noise_rho: float = 0.7
    wind_cloud_coupling: float = 0.5

    def expected_cloudiness(self) -> float:
        if self.cloudiness is not None:
            return self.cloudiness
        return 1.0 - self.cloud_depth * self.cloud_alpha / (self.cloud_alpha + self.cloud_beta)


@dataclass(frozen=True)
class DemandParams:
    """Community load: daily cycle peaking in the evening with a
    half-day harmonic adding the morning bump."""

    base_kw: float = 0.9
    daily_amp_kw: float = 0.3
    halfday_amp_kw: float = 0.15
    evening_peak_hour: float = 19.0
    morning_peak_hour: float = 7.0
    noise_sd: float = 0.05
    noise_rho: float = 0.5
    floor_kw: float = 0.05
    scale: float = 1.0


def _ar1(rng: np.random.Generator, n: int, sd: float, rho: float) -> np.ndarray:
    e = rng.normal(0.0, sd, n)
    if rho == 0.0 or n == 0:
        return e
    out = np.empty(n)
    out[0] = e[0]
    w = math.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        out[i] = rho * out[i - 1] + w * e[i]
    return out


def synthetic_weather(
    seed: int,
    days: int,
    params: WeatherParams = WeatherParams(),
    start: float = DEFAULT_START,
    step: float = 600.0,
) -> tuple[Series, Series]:
    """Deterministic per-seed irradiance and wind series.

    Each day draws one cloudiness factor; the wind level scales with it
    so poor-sun days are also poor-wind days, and the wind peak sits at
    midday alongside solar noon.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(round(days * DAY_S / step))
    t = start + step * np.arange(n)
    hour = (t % DAY_S) / HOUR_S
    day_idx = ((t - start) // DAY_S).astype(np.int64)
    n_days = int(day_idx[-1]) + 1

    if params.cloudiness is not None:
        cloud = np.full(n_days, float(params.cloudiness))
    else:
        cloud = 1.0 - params.cloud_depth * rng.beta(params.cloud_alpha, params.cloud_beta, n_days)

    arc = np.sin(np.pi * (hour - params.sunrise_hour) / params.daylight_hours)
    arc = np.where(
        (hour >= params.sunrise_hour) & (hour <= params.sunrise_hour + params.daylight_hours),
        np.maximum(arc, 0.0),
        0.0,
    )
    irr = params.peak_irradiance * cloud[day_idx] * arc

    scale = (1.0 - params.wind_cloud_coupling) + params.wind_cloud_coupling * cloud[day_idx]
    expected_scale = (
        1.0 - params.wind_cloud_coupling
        + params.wind_cloud_coupling * params.expected_cloudiness()
    )
    wind_arc = np.sin(np.pi * (hour - params.wind_day_start_hour) / params.wind_day_hours)
    wind_arc = np.where(
        (hour >= params.wind_day_start_hour)
        & (hour <= params.wind_day_start_hour + params.wind_day_hours),
        np.maximum(wind_arc, 0.0),
        0.0,
    )
    shape = 1.0 + params.wind_arc_ratio * wind_arc
    shape_mean = 1.0 + params.wind_arc_ratio * (params.wind_day_hours / 24.0) * (2.0 / np.pi)
    level = params.wind_mean / (shape_mean * expected_scale)
    wind = np.maximum(
        0.0, level * scale * shape + _ar1(rng, n, params.wind_noise_sd, params.wind_noise_rho)
    )

    return (
        Series(Channel.IRRADIANCE, start, step, irr),
        Series(Channel.WIND_SPEED, start, step, wind),
    )


def synthetic_demand(
    seed: int,
    days: int,
    params: DemandParams = DemandParams(),
    start: float = DEFAULT_START,
    step: float = 600.0,
) -> Series:
    """Deterministic per-seed community demand series."""
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(round(days * DAY_S / step))
    t = start + step * np.arange(n)
    hour = (t % DAY_S) / HOUR_S
    shape = (
        params.base_kw
        + params.daily_amp_kw * np.cos(2.0 * np.pi * (hour - params.evening_peak_hour) / 24.0)
        + params.halfday_amp_kw * np.cos(2.0 * np.pi * (hour - params.morning_peak_hour) / 12.0)
    )
    load = params.scale * np.maximum(params.floor_kw, shape + _ar1(rng, n, params.noise_sd, params.noise_rho))
    return Series(Channel.LOAD_POWER, start, step, load)


def run_scenario(
    config: MicrogridConfig = MicrogridConfig(),
    seed: int = 0,
    days: int = 30,
    step: float = 600.0,
    start: float = DEFAULT_START,
    weather: WeatherParams = WeatherParams(),
    demand: DemandParams = DemandParams(),
    initial: BatteryState | None = None,
) -> SimResult:
    """Generate synthetic weather/demand for a seed and simulate them."""
    irr, wind = synthetic_weather(seed, days, weather, start, step)
    load = synthetic_demand(seed + 1_000_003, days, demand, start, step)
    return simulate(config, irr, wind, load, initial=initial)


# ---------------------------------------------------------------------------
# config file

@dataclass(frozen=True)
class ScenarioConfig:
    grid: MicrogridConfig = MicrogridConfig()
    weather: WeatherParams = WeatherParams()
    demand: DemandParams = DemandParams()


_GRID_SECTIONS = {
    "pv": ("pv_kwp", "pv_derate"),
    "wind": ("n_turbines", "turbine_rated_kw", "cut_in", "rated_speed", "cut_out"),
    "battery": (
        "battery_kwh", "usable_depth", "eta_charge", "eta_discharge",
        "cutoff_v", "rearm_v", "ocv_full_v", "ocv_floor_v", "volt_per_kw",
    ),
    "inverter": ("inverter_limit_kw", "bus_nominal_v"),
}


def _apply_section(section: str, data: Mapping, allowed: tuple, target: dict) -> None:
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        target[key] = value


def load_config(path) -> ScenarioConfig:
    """Read an optional TOML config with sections [pv], [wind], [battery],
    [inverter] (microgrid ratings) plus [weather] and [demand] (synthetic
    input parameters).  Missing keys keep their defaults."""
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except _toml.TOMLDecodeError as e:
        raise ConfigError(f"bad config {path}: {e}") from None

    grid_kwargs: dict = {}
    weather_kwargs: dict = {}
    demand_kwargs: dict = {}
    for section, data in doc.items():
        if not isinstance(data, Mapping):
            raise ConfigError(f"top-level key {section!r} outside any section")
        if section in _GRID_SECTIONS:
            _apply_section(section, data, _GRID_SECTIONS[section], grid_kwargs)
        elif section == "weather":
            _apply_section(section, data, tuple(f.name for f in fields(WeatherParams)), weather_kwargs)
        elif section == "demand":
            _apply_section(section, data, tuple(f.name for f in fields(DemandParams)), demand_kwargs)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    try:
        return ScenarioConfig(
            MicrogridConfig(**grid_kwargs),
            WeatherParams(**weather_kwargs),
            DemandParams(**demand_kwargs),
        )
    except TypeError as e:
        raise ConfigError(str(e)) from None
