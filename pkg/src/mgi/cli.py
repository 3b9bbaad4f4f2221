"""Command-line front end: simulate -> ingest -> analyze -> forecast.

Every command is deterministic given its arguments, input bytes and
seed.  Exit codes: 0 success, 1 I/O or parse failure, 2 schema/config
error, 3 usage error, 4 data precondition failure.  Set MGI_LOG to
error|info|debug to control diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, ParseError, SchemaError
from . import analytics, forecast, outage, spectral
from .simgrid import ScenarioConfig, initial_state, load_config, run_scenario
from .telemetry import (
    Channel,
    HOUR_S,
    TelemetryFrame,
    clean,
    format_timestamp,
    frame_from_records,
    parse_csv,
    read_frame_csv,
    write_frame_csv,
)

log = logging.getLogger("mgi")

EXIT_OK = 0
EXIT_IO = 1
EXIT_SCHEMA = 2
EXIT_USAGE = 3
EXIT_DATA = 4

ANALYSES = (
    "outages", "spectrum", "acf", "typical-day", "seasonal", "trend",
    "correlate", "anomalies",
)

#: Default set: everything that applies to a frame of any length.  trend
#: needs two calendar years, so it is opt-in.
DEFAULT_ANALYSES = tuple(a for a in ANALYSES if a != "trend")

#: Channels the paper-style signal analyses run on (voltage is the outage
#: indicator, not a resource/demand signal).
SIGNAL_CHANNELS = (Channel.IRRADIANCE, Channel.WIND_SPEED, Channel.LOAD_POWER)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route to exit code 3, not argparse's 2
        raise UsageError(message)


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("MGI_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out_dir: Path, command: str, args, inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_path": getattr(args, "config", None),
        "inputs": inputs,
        "outputs": sorted(outputs),
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_schema(path: str | None):
    """Schema file: {"timestamp_column": ..., "timestamp_format": ...,
    "columns": {csv column -> channel key}}.  Without a file the
    canonical column names apply."""
    if path is None:
        return {ch.csv_column: ch for ch in Channel}, "timestamp", None
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise SchemaError(f"cannot read schema {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"bad schema JSON {path}: {e}") from None
    if not isinstance(doc, dict) or "columns" not in doc or not isinstance(doc["columns"], dict):
        raise SchemaError("schema needs a 'columns' object")
    schema = {col: Channel.from_key(key) for col, key in doc["columns"].items()}
    return schema, doc.get("timestamp_column", "timestamp"), doc.get("timestamp_format")


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    schema, ts_col, ts_fmt = _load_schema(args.schema)
    try:
        data = Path(args.csv).read_bytes()
    except OSError as e:
        raise ParseError(f"cannot read {args.csv}: {e}") from None
    records = parse_csv(data, schema, timestamp_column=ts_col, timestamp_format=ts_fmt)
    records, report = clean(records, policy=args.policy)
    if not records:
        raise DataError("no usable rows after cleaning")
    frame = frame_from_records(
        records, step=args.step * 60.0, gap_fill=args.gap_fill, max_fill=args.max_fill
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_frame_csv(frame, out)
    log.info("ingested %d rows -> %s", report.rows_total, out)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _analysis_outages(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    episodes = outage.detect_outages(
        frame[Channel.DC_VOLTAGE], cutoff=args.cutoff, min_duration=args.min_outage * 60.0
    )
    stats = outage.outage_stats(episodes, (frame.start, frame.end))
    attributions = []
    for ep in episodes:
        try:
            attributions.append(outage.attribute_cause(ep, frame).to_dict())
        except DataError as e:
            attributions.append({"episode": ep.to_dict(), "causes": [], "error": str(e)})
    doc = stats.to_dict()
    doc["attributions"] = attributions
    _write_json(out_dir / "outages.json", doc)
    _write_csv(out_dir / "outages.csv", ["hour", "count"], stats.histogram_rows())
    return ["outages.json", "outages.csv"]


def _analysis_spectrum(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    outputs = []
    periods = {}
    for ch in SIGNAL_CHANNELS:
        if ch not in frame:
            continue
        spec = spectral.dft(frame[ch])
        name = f"spectrum_{ch.key}.csv"
        _write_csv(out_dir / name, ["frequency_cpd", "magnitude"], spec.to_csv_rows())
        outputs.append(name)
        periods[ch.key] = spectral.detect_periods(spec).to_dict()
    _write_json(out_dir / "spectrum.json", periods)
    return ["spectrum.json", *outputs]


def _analysis_acf(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    outputs = []
    peaks = {}
    for ch in SIGNAL_CHANNELS:
        if ch not in frame:
            continue
        series = frame[ch]
        max_lag = min(72 * HOUR_S, (len(series) - 1) * series.step / 2)
        acf = spectral.autocorrelation(series, max_lag)
        name = f"acf_{ch.key}.csv"
        _write_csv(out_dir / name, ["lag_hours", "r"], [(lag / HOUR_S, r) for lag, r in acf])
        outputs.append(name)
        peaks[ch.key] = spectral.detect_periods(acf=acf).to_dict()
    _write_json(out_dir / "acf.json", peaks)
    return ["acf.json", *outputs]


def _analysis_typical_day(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    outputs = []
    doc = {}
    for ch in frame.channels:
        profile = analytics.typical_day(frame[ch])
        name = f"typical_day_{ch.key}.csv"
        _write_csv(out_dir / name, ["slot_time", "mean", "stddev", "count"], profile.to_csv_rows())
        outputs.append(name)
        means = profile.slot_means
        doc[ch.key] = {
            "slots": len(profile),
            "max_slot": profile.slot_label(int(np.nanargmax(means))),
            "min_slot": profile.slot_label(int(np.nanargmin(means))),
        }
    _write_json(out_dir / "typical_day.json", doc)
    return ["typical_day.json", *outputs]


def _analysis_seasonal(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    load = frame[Channel.LOAD_POWER]
    adjusted = analytics.seasonal_adjust(load)
    rows = []
    for t, v in zip(adjusted.times(), adjusted.values):
        rows.append((format_timestamp(t), "" if np.isnan(v) else float(v)))
    _write_csv(out_dir / "seasonal_load.csv", ["timestamp", "load_kw_adjusted"], rows)
    present = adjusted.values[~np.isnan(adjusted.values)]
    _write_json(out_dir / "seasonal.json", {
        "channel": "load",
        "residual_std": float(present.std()) if present.size else None,
    })
    return ["seasonal.json", "seasonal_load.csv"]


def _analysis_trend(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    report = analytics.trend(frame[Channel.LOAD_POWER])
    _write_json(out_dir / "trend.json", report.to_dict())
    rows = [
        (y, report.per_year_mean[y], report.per_year_daily_max_mean[y], report.per_year_days[y])
        for y in sorted(report.per_year_mean)
    ]
    _write_csv(out_dir / "trend.csv", ["year", "mean_kw", "daily_max_mean_kw", "days"], rows)
    return ["trend.json", "trend.csv"]


def _analysis_correlate(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    pairs = [
        (Channel.IRRADIANCE, Channel.WIND_SPEED),
        (Channel.IRRADIANCE, Channel.DC_VOLTAGE),
        (Channel.WIND_SPEED, Channel.DC_VOLTAGE),
    ]
    doc = {}
    for a, b in pairs:
        if a not in frame or b not in frame:
            continue
        key = f"{a.key}_{b.key}"
        try:
            doc[key] = analytics.correlation_report(frame[a], frame[b]).to_dict()
        except DataError as e:
            doc[key] = {"error": str(e)}
    _write_json(out_dir / "correlation.json", doc)
    curve = analytics.lag_curve(
        analytics.hourly_mean(frame[Channel.IRRADIANCE]),
        analytics.hourly_mean(frame[Channel.WIND_SPEED]),
        6 * HOUR_S,
    )
    _write_csv(
        out_dir / "correlation_irradiance_wind.csv",
        ["lag_hours", "r"],
        [(lag / HOUR_S, r) for lag, r in curve],
    )
    return ["correlation.json", "correlation_irradiance_wind.csv"]


def _analysis_anomalies(frame: TelemetryFrame, out_dir: Path, args) -> list[str]:
    found = []
    for ch in SIGNAL_CHANNELS:
        if ch not in frame:
            continue
        try:
            found.extend(analytics.detect_anomalies(frame[ch], z_threshold=args.z_threshold))
        except DataError as e:
            log.info("anomaly scan skipped for %s: %s", ch.key, e)
    found.sort(key=lambda a: (a.ts, a.channel.key))
    _write_json(out_dir / "anomalies.json", [a.to_dict() for a in found])
    rows = [
        (format_timestamp(a.ts), a.channel.key, a.value, a.zscore, a.kind) for a in found
    ]
    _write_csv(out_dir / "anomalies.csv", ["timestamp", "channel", "value", "zscore", "kind"], rows)
    return ["anomalies.json", "anomalies.csv"]


_ANALYSIS_RUNNERS = {
    "outages": _analysis_outages,
    "spectrum": _analysis_spectrum,
    "acf": _analysis_acf,
    "typical-day": _analysis_typical_day,
    "seasonal": _analysis_seasonal,
    "trend": _analysis_trend,
    "correlate": _analysis_correlate,
    "anomalies": _analysis_anomalies,
}


def cmd_analyze(args) -> int:
    requested = [a.strip() for a in args.analyses.split(",") if a.strip()]
    if not requested:
        raise UsageError("no analyses requested")
    for a in requested:
        if a not in _ANALYSIS_RUNNERS:
            raise UsageError(f"unknown analysis {a!r}; choose from {', '.join(ANALYSES)}")
    frame = read_frame_csv(args.frame)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    for a in requested:
        outputs.extend(_ANALYSIS_RUNNERS[a](frame, out_dir, args))
        log.info("analysis %s done", a)
    _write_manifest(out_dir, "analyze", args, [args.frame], outputs + ["manifest.json"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_config(args.config) if args.config else ScenarioConfig()
    result = run_scenario(
        config=scenario.grid,
        seed=args.seed,
        days=args.days,
        step=args.step * 60.0,
        weather=scenario.weather,
        demand=scenario.demand,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_frame_csv(result.frame, out_dir / "telemetry.csv")
    _write_json(out_dir / "truth.json", result.truth_dict())
    _write_manifest(
        out_dir, "simulate", args, [args.config] if args.config else [],
        ["telemetry.csv", "truth.json", "manifest.json"],
    )
    log.info("simulated %d days, %d outage episodes", args.days, len(result.truth_outages))
    return EXIT_OK


def cmd_forecast(args) -> int:
    scenario = load_config(args.config) if args.config else ScenarioConfig()
    config = scenario.grid
    frame = read_frame_csv(args.frame)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    horizon_s = args.horizon * HOUR_S
    outputs: list[str] = []

    forecasts = {}
    for ch in SIGNAL_CHANNELS:
        model = forecast.fit_harmonic(frame[ch])
        _write_json(out_dir / f"model_{ch.key}.json", model.to_dict())
        fc = forecast.predict(model, frame.end, horizon_s, frame.step)
        rows = [(format_timestamp(t), float(v)) for t, v in zip(fc.times(), fc.values)]
        _write_csv(out_dir / f"forecast_{ch.key}.csv", ["timestamp", ch.csv_column], rows)
        outputs += [f"model_{ch.key}.json", f"forecast_{ch.key}.csv"]
        forecasts[ch] = fc

    voltage = frame[Channel.DC_VOLTAGE].values
    present = voltage[~np.isnan(voltage)]
    if present.size == 0:
        raise DataError("voltage channel has no data to set the battery state")
    v_last = float(present[-1])
    soc = min(1.0, max(0.0, config.soc_from_ocv(v_last)))
    battery = initial_state(config, soc=soc, online=v_last >= config.cutoff_v)
    alerts = forecast.outage_risk(
        forecasts[Channel.IRRADIANCE], forecasts[Channel.WIND_SPEED],
        forecasts[Channel.LOAD_POWER], battery, config,
    )
    (out_dir / "alerts.txt").write_text("".join(a.render() + "\n" for a in alerts))
    _write_json(out_dir / "alerts.json", [a.to_dict() for a in alerts])
    outputs += ["alerts.txt", "alerts.json"]
    _write_manifest(out_dir, "forecast", args, [args.frame], outputs + ["manifest.json"])
    log.info("forecast horizon %sh, %d alerts", args.horizon, len(alerts))
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.dir)
    summary: dict = {"tool_version": __version__}
    for name in ("outages", "spectrum", "acf", "trend", "correlation", "seasonal", "anomalies"):
        path = out_dir / f"{name}.json"
        if path.exists():
            summary[name] = json.loads(path.read_text())
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="mgi", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mgi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, clean and resample a telemetry CSV")
    p.add_argument("csv", help="input CSV path")
    p.add_argument("--out", required=True, help="output frame CSV path")
    p.add_argument("--schema", default=None, help="schema JSON path")
    p.add_argument("--step", type=float, default=10.0, help="grid step, minutes")
    p.add_argument("--gap-fill", default="linear", choices=["leave_gap", "hold_last", "linear"])
    p.add_argument("--max-fill", type=int, default=6, help="longest gap to fill, samples")
    p.add_argument("--policy", default="nullify_cell", choices=["nullify_cell", "drop_row"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="run analyses over a frame")
    p.add_argument("frame", help="frame CSV path")
    p.add_argument(
        "--analyses",
        default=",".join(DEFAULT_ANALYSES),
        help=f"comma list from: {', '.join(ANALYSES)} (trend is opt-in)",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cutoff", type=float, default=43.0, help="outage cutoff, V")
    p.add_argument("--min-outage", type=float, default=20.0, help="minimum episode, minutes")
    p.add_argument("--z-threshold", type=float, default=4.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate labeled synthetic telemetry")
    p.add_argument("--config", default=None, help="TOML config path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--step", type=float, default=10.0, help="grid step, minutes")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("forecast", help="fit harmonic models and emit alerts")
    p.add_argument("frame", help="frame CSV path")
    p.add_argument("--horizon", type=float, default=24.0, help="hours ahead")
    p.add_argument("--config", default=None, help="TOML config path")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("report", help="print a consolidated summary of an analyze dir")
    p.add_argument("dir", help="directory with analysis artifacts")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_IO
    except SchemaError as e:
        print(f"schema/config error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
