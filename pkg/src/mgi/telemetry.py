"""Data model, CSV ingestion, cleaning, resampling and period slicing.

Telemetry is modelled as uniformly sampled channels on a shared grid.
Timestamps are local standard time (no DST, no timezone conversion)
stored as epoch seconds; gaps are NaN.  All containers are immutable
after construction and safe to share between threads.
"""

from __future__ import annotations

import calendar
import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from types import MappingProxyType
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, SchemaError

DAY_S = 86400.0
HOUR_S = 3600.0

#: Cell contents treated as an explicit null marker rather than a number.
NULL_TOKENS = frozenset({"n/a", "na", "null", "none", "nan"})


class Channel(Enum):
    """A measured channel; the unit is fixed by the channel kind."""

    IRRADIANCE = ("irradiance", "W/m^2", "irradiance_w_m2", (0.0, 1500.0))
    WIND_SPEED = ("wind", "m/s", "wind_speed_m_s", (0.0, 40.0))
    LOAD_POWER = ("load", "kW", "load_kw", (0.0, 8.0))
    DC_VOLTAGE = ("voltage", "V", "dc_voltage_v", (30.0, 60.0))

    def __init__(self, key: str, unit: str, csv_column: str, limits: tuple[float, float]):
        self.key = key
        self.unit = unit
        self.csv_column = csv_column
        self.default_limits = limits

    @property
    def non_negative(self) -> bool:
        """True for channels that are physically >= 0 (all but bus voltage,
        which is strictly positive but may be shifted by adjustments)."""
        return self is not Channel.DC_VOLTAGE

    @classmethod
    def from_key(cls, key: str) -> "Channel":
        for ch in cls:
            if key in (ch.key, ch.csv_column, ch.name, ch.name.lower()):
                return ch
        raise SchemaError(f"unknown channel {key!r}")


#: Well-known collection-period labels; anything else is a custom label.
PERIOD_1 = "2018-2019"
PERIOD_2 = "2020-2021"


class DefectKind(str, Enum):
    NULL = "null"
    NON_NUMERIC = "non_numeric"
    OUT_OF_RANGE = "out_of_range"
    DUPLICATE_TIMESTAMP = "duplicate_timestamp"
    GAP = "gap"


@dataclass(frozen=True)
class Defect:
    row: int
    column: str
    kind: DefectKind
    channel: Channel | None = None  # set for cell defects; not serialized

    def to_dict(self) -> dict:
        return {"row": self.row, "column": self.column, "kind": self.kind.value}


@dataclass(frozen=True)
class RawRecord:
    """One CSV data row: a timestamp plus one optional value per channel."""

    row: int
    ts: float | None
    values: Mapping[Channel, float | None]
    defects: tuple[Defect, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))


@dataclass
class CleanReport:
    rows_total: int = 0
    rows_dropped: int = 0
    cells_nullified: int = 0
    defects: list[Defect] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows_total": self.rows_total,
            "rows_dropped": self.rows_dropped,
            "cells_nullified": self.cells_nullified,
            "defects": [d.to_dict() for d in self.defects],
        }


def parse_timestamp(text: str, fmt: str | None = None) -> float:
    """Parse a timestamp string to epoch seconds (wall clock taken as
    local standard time; any UTC offset in the text is ignored)."""
    text = text.strip()
    try:
        if fmt is None:
            dt = datetime.fromisoformat(text)
        else:
            dt = datetime.strptime(text, fmt)
    except ValueError as e:
        raise ParseError(f"bad timestamp {text!r}: {e}") from None
    dt = dt.replace(tzinfo=None)
    return calendar.timegm(dt.timetuple()) + dt.microsecond / 1e6


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc).replace(tzinfo=None)
    return dt.isoformat()


def hour_of_day(ts: float) -> float:
    return (ts % DAY_S) / HOUR_S


@dataclass(frozen=True, eq=False)
class Series:
    """One uniformly sampled channel; ``values[i]`` is at ``start + i*step``."""

    channel: Channel
    start: float
    step: float
    values: np.ndarray
    filled: int = 0  # samples synthesized by gap filling at resample time

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be > 0")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a non-empty 1-d array")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.channel is other.channel
            and self.start == other.start
            and self.step == other.step
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None  # mutable-payload semantics: identity hashing is a trap

    @property
    def end(self) -> float:
        """Exclusive end of the grid."""
        return self.start + len(self) * self.step

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self))

    def has_gaps(self) -> bool:
        return bool(np.isnan(self.values).any())

    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def with_values(self, values: np.ndarray, filled: int | None = None) -> "Series":
        return Series(self.channel, self.start, self.step, values,
                      self.filled if filled is None else filled)


@dataclass(frozen=True, eq=False)
class TelemetryFrame:
    """Time-aligned multi-channel container for one collection period."""

    series: Mapping[Channel, Series]
    period_label: str = "custom"

    def __post_init__(self):
        if not self.series:
            raise ValueError("frame needs at least one channel")
        ref = next(iter(self.series.values()))
        for ch, s in self.series.items():
            if s.channel is not ch:
                raise ValueError(f"series under {ch} has channel {s.channel}")
            if (s.start, s.step, len(s)) != (ref.start, ref.step, len(ref)):
                raise ValueError("all channels must share start, step and length")
        object.__setattr__(self, "series", MappingProxyType(dict(self.series)))

    def __getitem__(self, channel: Channel) -> Series:
        return self.series[channel]

    def __contains__(self, channel: Channel) -> bool:
        return channel in self.series

    def __eq__(self, other) -> bool:
        if not isinstance(other, TelemetryFrame):
            return NotImplemented
        return (
            self.period_label == other.period_label
            and set(self.series) == set(other.series)
            and all(self.series[ch] == other.series[ch] for ch in self.series)
        )

    __hash__ = None

    @property
    def channels(self) -> list[Channel]:
        return [ch for ch in Channel if ch in self.series]

    @property
    def start(self) -> float:
        return next(iter(self.series.values())).start

    @property
    def step(self) -> float:
        return next(iter(self.series.values())).step

    @property
    def end(self) -> float:
        return next(iter(self.series.values())).end


# ---------------------------------------------------------------------------
# ingestion

def _coerce_text(source) -> io.TextIOBase:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, str):
        return io.StringIO(source)
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(source, encoding="utf-8")
        return source
    raise ParseError(f"unreadable CSV source: {type(source).__name__}")


def parse_csv(
    source,
    schema: Mapping[str, Channel],
    timestamp_column: str = "timestamp",
    timestamp_format: str | None = None,
) -> list[RawRecord]:
    """Read a header CSV into raw records, marking unparsable cells.

    ``schema`` maps data column names to channels.  Cells are never
    coerced: a defective cell yields value ``None`` plus a defect mark
    (``null`` for null tokens, ``non_numeric`` for other junk, ``gap``
    for empty cells).  A record with an unparsable timestamp is kept,
    with ``ts=None``, for the cleaner to drop and tally.
    """
    if not schema:
        raise SchemaError("schema maps no columns")
    text = _coerce_text(source)
    try:
        reader = csv.reader(text)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV: no header row") from None
        header = [h.strip() for h in header]
        if timestamp_column not in header:
            raise SchemaError(f"timestamp column {timestamp_column!r} not in header {header}")
        for col in schema:
            if col not in header:
                raise SchemaError(f"schema column {col!r} not in header {header}")
        ts_idx = header.index(timestamp_column)
        col_idx = {col: header.index(col) for col in schema}

        records: list[RawRecord] = []
        for row_i, row in enumerate(reader):
            defects: list[Defect] = []
            ts: float | None = None
            cell = row[ts_idx].strip() if ts_idx < len(row) else ""
            try:
                ts = parse_timestamp(cell, timestamp_format)
            except ParseError:
                defects.append(Defect(row_i, timestamp_column, DefectKind.NON_NUMERIC))
            values: dict[Channel, float | None] = {}
            for col, ch in schema.items():
                i = col_idx[col]
                cell = row[i].strip() if i < len(row) else ""
                if cell == "":
                    values[ch] = None
                    defects.append(Defect(row_i, col, DefectKind.GAP, ch))
                elif cell.lower() in NULL_TOKENS:
                    values[ch] = None
                    defects.append(Defect(row_i, col, DefectKind.NULL, ch))
                else:
                    try:
                        values[ch] = float(cell)
                    except ValueError:
                        values[ch] = None
                        defects.append(Defect(row_i, col, DefectKind.NON_NUMERIC, ch))
            records.append(RawRecord(row_i, ts, values, tuple(defects)))
        return records
    except (UnicodeDecodeError, csv.Error) as e:
        raise ParseError(f"unreadable CSV: {e}") from None


def records_to_csv(
    records: Iterable[RawRecord],
    schema: Mapping[str, Channel],
    timestamp_column: str = "timestamp",
) -> str:
    """Inverse of :func:`parse_csv` for defect-free records."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([timestamp_column, *schema.keys()])
    for rec in records:
        cells = [format_timestamp(rec.ts)]
        for ch in schema.values():
            v = rec.values.get(ch)
            cells.append("" if v is None else repr(v))
        writer.writerow(cells)
    return buf.getvalue()


DROP_ROW = "drop_row"
NULLIFY_CELL = "nullify_cell"

#: Defect kinds that make a cell's value unusable.
_BAD_CELL = (DefectKind.NULL, DefectKind.NON_NUMERIC, DefectKind.OUT_OF_RANGE)


def clean(
    records: Sequence[RawRecord],
    policy: str = NULLIFY_CELL,
    range_limits: Mapping[Channel, tuple[float, float]] | None = None,
) -> tuple[list[RawRecord], CleanReport]:
    """Resolve defective cells and duplicate timestamps.

    Under ``nullify_cell`` a defective cell becomes absent; under
    ``drop_row`` the whole row is removed.  Rows without a usable
    timestamp and duplicate timestamps (first kept) are always dropped.
    The report tallies every modification; input order is preserved and
    cleaning is idempotent.
    """
    if policy not in (DROP_ROW, NULLIFY_CELL):
        raise ValueError(f"unknown clean policy {policy!r}")
    limits = {ch: ch.default_limits for ch in Channel}
    if range_limits:
        limits.update(range_limits)

    report = CleanReport(rows_total=len(records))
    seen_ts: set[float] = set()
    out: list[RawRecord] = []
    for rec in records:
        defects = list(rec.defects)
        values = dict(rec.values)
        for ch, v in values.items():
            lo, hi = limits[ch]
            if v is not None and not (lo <= v <= hi):
                defects.append(Defect(rec.row, ch.csv_column, DefectKind.OUT_OF_RANGE, ch))
        bad_channels = {d.channel for d in defects if d.kind in _BAD_CELL}
        report.defects.extend(defects)

        if rec.ts is None:
            report.rows_dropped += 1
            continue
        if rec.ts in seen_ts:
            report.defects.append(Defect(rec.row, "timestamp", DefectKind.DUPLICATE_TIMESTAMP))
            report.rows_dropped += 1
            continue
        seen_ts.add(rec.ts)

        if bad_channels:
            if policy == DROP_ROW:
                report.rows_dropped += 1
                continue
            # null/non_numeric cells are already absent; they still count as
            # nullified because cleaning is what resolves them
            report.cells_nullified += len(bad_channels)
            for ch in bad_channels:
                values[ch] = None
        out.append(RawRecord(rec.row, rec.ts, values, ()))
    return out, report


LEAVE_GAP = "leave_gap"
HOLD_LAST = "hold_last"
LINEAR = "linear"


def resample(
    records: Sequence[RawRecord],
    channel: Channel,
    step: float = 600.0,
    gap_fill: str = LEAVE_GAP,
    max_fill: int = 0,
) -> Series:
    """Put one channel of cleaned records onto a uniform grid.

    The grid starts at the first record and each record lands in its
    nearest slot (first one wins).  Interior runs of missing slots are
    filled by ``hold_last`` or ``linear`` only when the run is at most
    ``max_fill`` samples long; longer holes stay absent.  Filled sample
    count is reported on the series.
    """
    if gap_fill not in (LEAVE_GAP, HOLD_LAST, LINEAR):
        raise ValueError(f"unknown gap_fill {gap_fill!r}")
    if step <= 0:
        raise ValueError("step must be > 0")
    ts = np.array([r.ts for r in records], dtype=np.float64)
    if ts.size == 0:
        raise DataError("no records to resample")
    if np.isnan(ts).any():
        raise DataError("records contain unusable timestamps; clean first")
    if ts.size > 1 and (np.diff(ts) <= 0).any():
        raise DataError("record timestamps are not strictly increasing")

    start = float(ts[0])
    idx = np.rint((ts - start) / step).astype(np.int64)
    n = int(idx[-1]) + 1
    values = np.full(n, np.nan)
    for i, rec in zip(idx, records):
        if np.isnan(values[i]):
            v = rec.values.get(channel)
            if v is not None:
                values[i] = v

    filled = 0
    if gap_fill != LEAVE_GAP and max_fill > 0:
        present = np.flatnonzero(~np.isnan(values))
        for a, b in zip(present[:-1], present[1:]):
            run = b - a - 1
            if 0 < run <= max_fill:
                if gap_fill == HOLD_LAST:
                    values[a + 1 : b] = values[a]
                else:
                    values[a + 1 : b] = np.interp(
                        np.arange(a + 1, b), [a, b], [values[a], values[b]]
                    )
                filled += run
    return Series(channel, start, step, values, filled)


def frame_from_records(
    records: Sequence[RawRecord],
    step: float = 600.0,
    gap_fill: str = LEAVE_GAP,
    max_fill: int = 0,
    period_label: str = "custom",
) -> TelemetryFrame:
    """Resample every channel present in the records onto one grid."""
    if not records:
        raise DataError("no records")
    channels = list(records[0].values.keys())
    series = {
        ch: resample(records, ch, step=step, gap_fill=gap_fill, max_fill=max_fill)
        for ch in channels
    }
    return TelemetryFrame(series, period_label)


def slice_period(frame: TelemetryFrame, start_ts: float, end_ts: float) -> TelemetryFrame:
    """Restrict a frame to grid points in ``[start_ts, end_ts)``."""
    if not start_ts < end_ts:
        raise ValueError("slice needs start < end")
    step = frame.step
    i0 = max(0, math.ceil((start_ts - frame.start) / step - 1e-9))
    i1 = min(len(next(iter(frame.series.values()))), math.ceil((end_ts - frame.start) / step - 1e-9))
    if i0 >= i1:
        raise DataError("slice does not overlap the frame")
    sliced = {
        ch: Series(ch, s.start + i0 * step, step, s.values[i0:i1], 0)
        for ch, s in frame.series.items()
    }
    return TelemetryFrame(sliced, frame.period_label)


# ---------------------------------------------------------------------------
# frame persistence (CSV, same shape the ingester reads)

def default_schema(channels: Iterable[Channel] = Channel) -> dict[str, Channel]:
    return {ch.csv_column: ch for ch in channels}


def write_frame_csv(frame: TelemetryFrame, path) -> None:
    channels = frame.channels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *(ch.csv_column for ch in channels)])
        times = frame[channels[0]].times()
        cols = [frame[ch].values for ch in channels]
        for i, t in enumerate(times):
            row = [format_timestamp(t)]
            for col in cols:
                v = col[i]
                row.append("" if math.isnan(v) else repr(float(v)))
            writer.writerow(row)


def read_frame_csv(path, period_label: str = "custom", step: float | None = None) -> TelemetryFrame:
    """Load a frame written by :func:`write_frame_csv` (or any telemetry
    CSV with canonical column names).  The grid step is inferred from
    the smallest timestamp increment unless given."""
    with open(path, "rb") as fh:
        data = fh.read()
    header = data.split(b"\n", 1)[0].decode("utf-8").strip()
    columns = [c.strip() for c in header.split(",")]
    schema: dict[str, Channel] = {}
    for col in columns:
        if col == "timestamp":
            continue
        for ch in Channel:
            if col == ch.csv_column:
                schema[col] = ch
    if not schema:
        raise SchemaError(f"no telemetry columns found in {columns}")
    records = parse_csv(data, schema)
    records, _ = clean(records)
    if step is None:
        ts = np.array([r.ts for r in records if r.ts is not None])
        if ts.size < 2:
            raise DataError("cannot infer step from fewer than 2 rows")
        step = float(np.min(np.diff(ts)))
        if step <= 0:
            raise DataError("timestamps not increasing")
    return frame_from_records(records, step=step, period_label=period_label)
