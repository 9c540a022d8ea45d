"""Trajectory data model and GeoLife on-disk format parsers.

A point is (lon, lat, ts); a segment is a chronologically ordered sequence
of at least two points with an opaque id and an optional travel-mode label.
Segments travel between pipeline stages as line-delimited JSON records
(see docs/formats.md for the frozen field names).
"""

import calendar
import json
import math
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence


class FormatError(ValueError):
    """Raised when an input file violates its declared format."""


class Mode(str, Enum):
    """The five travel modes the classifier distinguishes."""

    WALK = "walk"
    BIKE = "bike"
    BUS = "bus"
    CAR = "car"
    SUBWAY = "subway"


# Canonical class order; classifier output index i corresponds to MODES[i].
MODES: tuple[Mode, ...] = (Mode.WALK, Mode.BIKE, Mode.BUS, Mode.CAR, Mode.SUBWAY)

_MODE_BY_NAME = {m.value: m for m in MODES}


def normalize_mode(raw_mode: str) -> Optional[Mode]:
    """Map a raw label-file mode string onto the five-mode vocabulary.

    Case-insensitive; strings outside the vocabulary (train, taxi,
    airplane, ...) return None. "taxi" is intentionally not folded into
    "car".
    """
    return _MODE_BY_NAME.get(raw_mode.strip().lower())


@dataclass(frozen=True)
class GpsPoint:
    """A single GPS sample: coordinates plus a UTC epoch timestamp."""

    lon: float
    lat: float
    ts: float

    def __post_init__(self) -> None:
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"lon {self.lon} outside [-180, 180]")
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not (math.isfinite(self.ts) and self.ts >= 0.0):
            raise ValueError(f"ts {self.ts} must be finite and non-negative")


@dataclass(frozen=True)
class TrajectorySegment:
    """A chronologically ordered run of GPS points with an optional mode."""

    segment_id: str
    points: tuple[GpsPoint, ...]
    mode: Optional[Mode] = None

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError(f"segment {self.segment_id}: needs at least 2 points")
        for a, b in zip(self.points, self.points[1:]):
            if not a.ts < b.ts:
                raise ValueError(
                    f"segment {self.segment_id}: timestamps not strictly increasing "
                    f"({a.ts} -> {b.ts})"
                )

    @property
    def duration_s(self) -> float:
        return self.points[-1].ts - self.points[0].ts


@dataclass(frozen=True)
class LabelInterval:
    """One line of a GeoLife labels.txt file: a time window with a raw mode."""

    start_ts: float
    end_ts: float
    raw_mode: str

    def __post_init__(self) -> None:
        if not self.start_ts < self.end_ts:
            raise ValueError(f"interval start {self.start_ts} not before end {self.end_ts}")


_PLT_HEADER_LINES = 6


def _epoch_utc(date_str: str, time_str: str) -> int:
    try:
        st = time.strptime(f"{date_str} {time_str}", "%Y-%m-%d %H:%M:%S")
    except ValueError as exc:
        raise ValueError(f"bad date/time {date_str!r} {time_str!r}: {exc}") from exc
    return calendar.timegm(st)


def parse_plt(plt_bytes: bytes) -> list[GpsPoint]:
    """Parse a GeoLife PLT file into points, in file order.

    Layout: exactly 6 header lines, then one comma-separated record per
    line: latitude, longitude, "0", altitude (feet, -777 when invalid),
    fractional days since 1899-12-30, date "YYYY-MM-DD", time "HH:MM:SS".
    Timestamps are built from the date+time fields interpreted as UTC; the
    altitude and fractional-day fields are ignored.
    """
    lines = plt_bytes.decode("utf-8", errors="replace").splitlines()
    if len(lines) < _PLT_HEADER_LINES:
        raise FormatError(f"PLT file has {len(lines)} lines; expected at least 6 header lines")
    points: list[GpsPoint] = []
    for lineno, line in enumerate(lines[_PLT_HEADER_LINES:], start=_PLT_HEADER_LINES + 1):
        fields = line.split(",")
        if len(fields) < 7:
            raise FormatError(f"line {lineno}: expected 7 comma-separated fields, got {len(fields)}")
        try:
            lat = float(fields[0])
            lon = float(fields[1])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: unparsable coordinate: {exc}") from exc
        try:
            ts = _epoch_utc(fields[5].strip(), fields[6].strip())
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        try:
            points.append(GpsPoint(lon=lon, lat=lat, ts=float(ts)))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return points


def plt_record(point: GpsPoint) -> str:
    """Serialize a point back to a PLT record line.

    Lossless for lat/lon/ts round-trips of parsed points; sub-second ts
    precision cannot be carried by the date+time fields and is truncated.
    """
    whole = int(point.ts)
    st = time.gmtime(whole)
    days = point.ts / 86400.0 + 25569.0  # 1970-01-01 is day 25569 after 1899-12-30
    return (
        f"{point.lat!r},{point.lon!r},0,0,{days!r},"
        f"{time.strftime('%Y-%m-%d', st)},{time.strftime('%H:%M:%S', st)}"
    )


def parse_labels(labels_bytes: bytes) -> list[LabelInterval]:
    """Parse a GeoLife labels.txt file into intervals, in file order.

    Layout: one header line, then tab-separated start time, end time
    ("YYYY/MM/DD HH:MM:SS", interpreted as UTC) and the raw mode string.
    """
    lines = labels_bytes.decode("utf-8", errors="replace").splitlines()
    intervals: list[LabelInterval] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise FormatError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        try:
            start = calendar.timegm(time.strptime(fields[0].strip(), "%Y/%m/%d %H:%M:%S"))
            end = calendar.timegm(time.strptime(fields[1].strip(), "%Y/%m/%d %H:%M:%S"))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: unparsable timestamp: {exc}") from exc
        try:
            intervals.append(
                LabelInterval(start_ts=float(start), end_ts=float(end), raw_mode=fields[2].strip())
            )
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return intervals


def segment_to_record(seg: TrajectorySegment) -> dict:
    return {
        "segment_id": seg.segment_id,
        "mode": seg.mode.value if seg.mode is not None else None,
        "points": [[p.lon, p.lat, p.ts] for p in seg.points],
    }


def segment_from_record(rec: dict) -> TrajectorySegment:
    mode = rec.get("mode")
    return TrajectorySegment(
        segment_id=rec["segment_id"],
        points=tuple(GpsPoint(lon=p[0], lat=p[1], ts=p[2]) for p in rec["points"]),
        mode=Mode(mode) if mode is not None else None,
    )


def write_segments(path: str | Path, segments: Iterable[TrajectorySegment]) -> int:
    """Write segments to a JSONL interchange file. Returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(json.dumps(segment_to_record(seg), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_segments(path: str | Path) -> list[TrajectorySegment]:
    """Read a JSONL interchange file back into segments."""
    out: list[TrajectorySegment] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(segment_from_record(json.loads(line)))
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from exc
    return out


def iter_segments(path: str | Path) -> Iterator[TrajectorySegment]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield segment_from_record(json.loads(line))
