"""Deterministic temporal and movement-dynamics features for a segment.

Every quantity the narrative stage describes is computed here exactly:
distances from great-circle legs, per-leg speeds, heading changes, low-speed
inactivity runs, and local-calendar context. Reports serialize to JSONL
(field names frozen in docs/formats.md).
"""

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from . import geo
from .trajectory import GpsPoint, TrajectorySegment


class DegenerateSegmentError(ValueError):
    """The segment carries no usable time extent."""


class DayType(str, Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


class TimeOfDay(str, Enum):
    MORNING_PEAK = "morning_peak"
    EVENING_PEAK = "evening_peak"
    DAYTIME_OFFPEAK = "daytime_offpeak"
    NIGHT = "night"


@dataclass(frozen=True)
class InactivityPeriod:
    start_ts: float
    end_ts: float

    @property
    def duration_s(self) -> float:
        return self.end_ts - self.start_ts


@dataclass(frozen=True)
class TemporalInfo:
    start_ts: float
    end_ts: float
    duration_s: float
    day_type: DayType
    time_of_day: TimeOfDay
    inactivity_periods: tuple[InactivityPeriod, ...]


@dataclass(frozen=True)
class DynamicsInfo:
    avg_speed_mps: float
    speed_min_mps: float
    speed_max_mps: float
    speed_std_mps: float
    sharp_turn_count: int
    brief_stop_count: int
    prolonged_stop_count: int
    path_length_m: float
    straight_line_m: float
    detour_index: Optional[float]


@dataclass(frozen=True)
class KinematicsReport:
    segment_id: str
    temporal: TemporalInfo
    dynamics: DynamicsInfo


@dataclass(frozen=True)
class KinematicsConfig:
    sharp_turn_deg: float = 30.0
    min_bearing_leg_m: float = 1.0
    stationary_speed_mps: float = 0.5
    brief_min_s: float = 2.0
    brief_max_s: float = 8.0
    prolonged_min_s: float = 10.0
    local_utc_offset_h: float = 8.0  # GeoLife corpus is Beijing-centered


class SpeedProfile(NamedTuple):
    avg_mps: float
    min_mps: float
    max_mps: float
    std_mps: float


def haversine_m(a: GpsPoint, b: GpsPoint) -> float:
    """Great-circle distance between two points, in meters."""
    return geo.haversine_m(a.lat, a.lon, b.lat, b.lon)


def path_length_m(seg: TrajectorySegment) -> float:
    """Total travelled distance: sum of great-circle leg lengths."""
    return sum(haversine_m(a, b) for a, b in zip(seg.points, seg.points[1:]))


def straight_line_m(seg: TrajectorySegment) -> float:
    """Great-circle distance between the first and last point."""
    return haversine_m(seg.points[0], seg.points[-1])


def detour_index(seg: TrajectorySegment) -> Optional[float]:
    """Path length divided by straight-line distance (>= 1), or None.

    None when the segment starts and ends at the same coordinates, which
    makes the straight-line denominator zero.
    """
    straight = straight_line_m(seg)
    if straight == 0.0:
        return None
    return path_length_m(seg) / straight


def _leg_speeds(seg: TrajectorySegment) -> list[float]:
    return [
        haversine_m(a, b) / (b.ts - a.ts) for a, b in zip(seg.points, seg.points[1:])
    ]


def speed_profile(seg: TrajectorySegment) -> SpeedProfile:
    """Average speed plus min/max/population-std of per-leg speeds.

    The average is path length over total duration, not the mean of the
    per-leg speeds, so it stays consistent with the narrative's "total
    distance divided by total duration" description.
    """
    duration = seg.duration_s
    if duration <= 0.0:
        raise DegenerateSegmentError(f"segment {seg.segment_id}: zero duration")
    speeds = _leg_speeds(seg)
    mean = sum(speeds) / len(speeds)
    var = sum((s - mean) ** 2 for s in speeds) / len(speeds)
    return SpeedProfile(
        avg_mps=path_length_m(seg) / duration,
        min_mps=min(speeds),
        max_mps=max(speeds),
        std_mps=math.sqrt(var),
    )


def turn_analysis(seg: TrajectorySegment, sharp_turn_deg: float = 30.0, min_leg_m: float = 1.0) -> int:
    """Count heading changes of at least ``sharp_turn_deg`` degrees.

    Bearings are computed per leg with the spherical initial-bearing
    formula; legs shorter than ``min_leg_m`` are skipped because their
    headings are noise-dominated. Segments with fewer than two usable legs
    count zero turns.
    """
    bearings: list[float] = []
    for a, b in zip(seg.points, seg.points[1:]):
        if haversine_m(a, b) < min_leg_m:
            continue
        bearings.append(geo.initial_bearing_deg(a.lat, a.lon, b.lat, b.lon))
    return sum(
        1
        for b1, b2 in zip(bearings, bearings[1:])
        if geo.heading_change_deg(b1, b2) >= sharp_turn_deg
    )


def stop_analysis(
    seg: TrajectorySegment,
    stationary_speed_mps: float = 0.5,
    brief_max_s: float = 8.0,
    prolonged_min_s: float = 10.0,
    brief_min_s: float = 2.0,
) -> tuple[tuple[InactivityPeriod, ...], int, int]:
    """Find maximal low-speed runs and bucket them by duration.

    An inactivity period is a maximal run of consecutive legs whose
    instantaneous speed is below ``stationary_speed_mps``; its extent is
    [first leg start, last leg end]. Periods lasting [brief_min_s,
    brief_max_s] count as brief, those longer than ``prolonged_min_s`` as
    prolonged; periods in neither range (sub-2 s blips and the 8-10 s gap
    between the buckets) are reported but not counted.
    """
    speeds = _leg_speeds(seg)
    periods: list[InactivityPeriod] = []
    run_start: Optional[int] = None
    for i, s in enumerate(speeds + [float("inf")]):  # sentinel closes a trailing run
        if s < stationary_speed_mps:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            periods.append(
                InactivityPeriod(start_ts=seg.points[run_start].ts, end_ts=seg.points[i].ts)
            )
            run_start = None
    brief = sum(1 for p in periods if brief_min_s <= p.duration_s <= brief_max_s)
    prolonged = sum(1 for p in periods if p.duration_s > prolonged_min_s)
    return tuple(periods), brief, prolonged


def _local_dt(ts: float, offset_h: float) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone(timedelta(hours=offset_h)))


def _day_type(ts: float, offset_h: float) -> DayType:
    return DayType.WEEKEND if _local_dt(ts, offset_h).weekday() >= 5 else DayType.WEEKDAY


def time_of_day_bucket(local_hour: int) -> TimeOfDay:
    if 7 <= local_hour < 9:
        return TimeOfDay.MORNING_PEAK
    if 17 <= local_hour < 19:
        return TimeOfDay.EVENING_PEAK
    if local_hour >= 22 or local_hour < 6:
        return TimeOfDay.NIGHT
    return TimeOfDay.DAYTIME_OFFPEAK


def temporal_info(
    seg: TrajectorySegment,
    local_utc_offset_h: float = 8.0,
    stationary_speed_mps: float = 0.5,
    brief_max_s: float = 8.0,
    prolonged_min_s: float = 10.0,
    brief_min_s: float = 2.0,
) -> TemporalInfo:
    """Calendar context of the segment start, in the configured local zone."""
    start = seg.points[0].ts
    end = seg.points[-1].ts
    periods, _, _ = stop_analysis(
        seg, stationary_speed_mps, brief_max_s, prolonged_min_s, brief_min_s
    )
    return TemporalInfo(
        start_ts=start,
        end_ts=end,
        duration_s=end - start,
        day_type=_day_type(start, local_utc_offset_h),
        time_of_day=time_of_day_bucket(_local_dt(start, local_utc_offset_h).hour),
        inactivity_periods=periods,
    )


def analyze(seg: TrajectorySegment, cfg: KinematicsConfig = KinematicsConfig()) -> KinematicsReport:
    """Compute the full kinematics report for one segment."""
    profile = speed_profile(seg)
    periods, brief, prolonged = stop_analysis(
        seg,
        cfg.stationary_speed_mps,
        cfg.brief_max_s,
        cfg.prolonged_min_s,
        cfg.brief_min_s,
    )
    temporal = TemporalInfo(
        start_ts=seg.points[0].ts,
        end_ts=seg.points[-1].ts,
        duration_s=seg.duration_s,
        day_type=_day_type(seg.points[0].ts, cfg.local_utc_offset_h),
        time_of_day=time_of_day_bucket(
            _local_dt(seg.points[0].ts, cfg.local_utc_offset_h).hour
        ),
        inactivity_periods=periods,
    )
    dynamics = DynamicsInfo(
        avg_speed_mps=profile.avg_mps,
        speed_min_mps=profile.min_mps,
        speed_max_mps=profile.max_mps,
        speed_std_mps=profile.std_mps,
        sharp_turn_count=turn_analysis(seg, cfg.sharp_turn_deg, cfg.min_bearing_leg_m),
        brief_stop_count=brief,
        prolonged_stop_count=prolonged,
        path_length_m=path_length_m(seg),
        straight_line_m=straight_line_m(seg),
        detour_index=detour_index(seg),
    )
    return KinematicsReport(segment_id=seg.segment_id, temporal=temporal, dynamics=dynamics)


def report_to_record(report: KinematicsReport) -> dict:
    t, d = report.temporal, report.dynamics
    return {
        "segment_id": report.segment_id,
        "temporal": {
            "start_ts": t.start_ts,
            "end_ts": t.end_ts,
            "duration_s": t.duration_s,
            "day_type": t.day_type.value,
            "time_of_day": t.time_of_day.value,
            "inactivity_periods": [[p.start_ts, p.end_ts, p.duration_s] for p in t.inactivity_periods],
        },
        "dynamics": {
            "avg_speed_mps": d.avg_speed_mps,
            "speed_min_mps": d.speed_min_mps,
            "speed_max_mps": d.speed_max_mps,
            "speed_std_mps": d.speed_std_mps,
            "sharp_turn_count": d.sharp_turn_count,
            "brief_stop_count": d.brief_stop_count,
            "prolonged_stop_count": d.prolonged_stop_count,
            "path_length_m": d.path_length_m,
            "straight_line_m": d.straight_line_m,
            "detour_index": d.detour_index,
        },
    }


def report_from_record(rec: dict) -> KinematicsReport:
    t = rec["temporal"]
    d = rec["dynamics"]
    return KinematicsReport(
        segment_id=rec["segment_id"],
        temporal=TemporalInfo(
            start_ts=t["start_ts"],
            end_ts=t["end_ts"],
            duration_s=t["duration_s"],
            day_type=DayType(t["day_type"]),
            time_of_day=TimeOfDay(t["time_of_day"]),
            inactivity_periods=tuple(
                InactivityPeriod(start_ts=p[0], end_ts=p[1]) for p in t["inactivity_periods"]
            ),
        ),
        dynamics=DynamicsInfo(
            avg_speed_mps=d["avg_speed_mps"],
            speed_min_mps=d["speed_min_mps"],
            speed_max_mps=d["speed_max_mps"],
            speed_std_mps=d["speed_std_mps"],
            sharp_turn_count=d["sharp_turn_count"],
            brief_stop_count=d["brief_stop_count"],
            prolonged_stop_count=d["prolonged_stop_count"],
            path_length_m=d["path_length_m"],
            straight_line_m=d["straight_line_m"],
            detour_index=d["detour_index"],
        ),
    )


def write_reports(path: str | Path, reports: Iterable[KinematicsReport]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report_to_record(report), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_reports(path: str | Path) -> list[KinematicsReport]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(report_from_record(json.loads(line)))
    return out
