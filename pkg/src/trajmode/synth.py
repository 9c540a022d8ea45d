"""Synthetic labeled corpus with a matching synthetic OSM extract.

Generates trajectories for the five travel modes with distinct kinematic
signatures over a fixed grid city: walkers wander with frequent turns,
bikes ride faster with gentler turns, buses follow bus-route streets and
dwell at stops, cars drive the grid with few stops, subway trips run along
the subway polylines with station dwells. The map (roads, subway lines,
bus stops) is emitted as OSM XML so the rendering pipeline sees the same
world the trajectories were drawn in.

Everything derives from one stdlib ``random.Random(seed)`` stream, so a
given (spec, seed) pair reproduces byte-identical output.
"""

import calendar
import math
import random
import time
from dataclasses import dataclass
from typing import Optional

from .trajectory import GpsPoint, Mode, TrajectorySegment

LAT0 = 39.90
LON0 = 116.35
METERS_PER_DEG = 6_371_000.0 * math.pi / 180.0
_COS_LAT0 = math.cos(math.radians(LAT0))

HALF_EXTENT_M = 3000.0
GRID_STEP_M = 500.0
BUS_ROUTE_YS = (-1000.0, 1000.0)
BUS_STOP_SPACING_M = 400.0
SUBWAY_EW_Y = 250.0
SUBWAY_NS_X = -250.0
SUBWAY_STATION_SPACING_M = 1200.0

BASE_TS = float(calendar.timegm(time.strptime("2008-06-02", "%Y-%m-%d")))


def _to_latlon(x_m: float, y_m: float) -> tuple[float, float]:
    return LAT0 + y_m / METERS_PER_DEG, LON0 + x_m / (METERS_PER_DEG * _COS_LAT0)


@dataclass(frozen=True)
class ModeParams:
    speed_mean_mps: float
    speed_std_mps: float
    speed_min_mps: float
    speed_max_mps: float
    turn_prob: float = 0.0
    turn_min_deg: float = 0.0
    turn_max_deg: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    segments_per_mode: int = 20
    seed: int = 0
    duration_range_s: tuple[float, float] = (420.0, 900.0)
    dwell_range_s: tuple[float, float] = (20.0, 40.0)
    signal_stop_prob: float = 0.006
    signal_stop_range_s: tuple[float, float] = (5.0, 15.0)
    gps_noise_m: float = 2.5
    dwell_noise_m: float = 0.2
    walk: ModeParams = ModeParams(1.2, 0.3, 0.4, 2.0, turn_prob=0.08, turn_min_deg=20, turn_max_deg=120)
    bike: ModeParams = ModeParams(4.0, 1.0, 2.2, 6.5, turn_prob=0.05, turn_min_deg=10, turn_max_deg=70)
    bus: ModeParams = ModeParams(7.0, 2.0, 3.0, 12.0)
    car: ModeParams = ModeParams(11.0, 4.0, 5.0, 22.0)
    subway: ModeParams = ModeParams(15.0, 3.0, 8.0, 22.0)


def _grid_positions() -> list[float]:
    n = int(HALF_EXTENT_M // GRID_STEP_M)
    return [i * GRID_STEP_M for i in range(-n, n + 1)]


def _bus_stop_xs() -> list[float]:
    n = int(HALF_EXTENT_M // BUS_STOP_SPACING_M)
    return [i * BUS_STOP_SPACING_M for i in range(-n, n + 1)]


def _subway_station_offsets() -> list[float]:
    n = int(HALF_EXTENT_M // SUBWAY_STATION_SPACING_M)
    return [i * SUBWAY_STATION_SPACING_M for i in range(-n, n + 1)]


def build_osm_xml() -> str:
    """The fixed grid city as an OSM XML extract.

    Streets every 500 m (the two central ones primary), one east-west and
    one north-south subway way joined by a route=subway relation, and
    bus_stop nodes along the designated bus-route streets.
    """
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="trajmode-synth">']
    node_id = 0
    way_id = 0
    node_defs: list[str] = []
    way_defs: list[str] = []

    def add_node(x: float, y: float, tags: str = "") -> int:
        nonlocal node_id
        node_id += 1
        lat, lon = _to_latlon(x, y)
        if tags:
            node_defs.append(f'<node id="{node_id}" lat="{lat:.7f}" lon="{lon:.7f}">{tags}</node>')
        else:
            node_defs.append(f'<node id="{node_id}" lat="{lat:.7f}" lon="{lon:.7f}"/>')
        return node_id

    def add_way(coords: list[tuple[float, float]], tags: str) -> int:
        nonlocal way_id
        refs = [add_node(x, y) for x, y in coords]
        way_id += 1
        nds = "".join(f'<nd ref="{r}"/>' for r in refs)
        way_defs.append(f'<way id="{way_id}">{nds}{tags}</way>')
        return way_id

    grid = _grid_positions()
    samples = grid  # vertex every 500 m along each street
    for y in grid:
        highway = "primary" if y == 0.0 else "residential"
        add_way([(x, y) for x in samples], f'<tag k="highway" v="{highway}"/>')
    for x in grid:
        highway = "primary" if x == 0.0 else "residential"
        add_way([(x, y) for y in samples], f'<tag k="highway" v="{highway}"/>')

    subway_ids = [
        add_way([(x, SUBWAY_EW_Y) for x in samples], '<tag k="railway" v="subway"/>'),
        add_way([(SUBWAY_NS_X, y) for y in samples], '<tag k="railway" v="subway"/>'),
    ]

    for route_y in BUS_ROUTE_YS:
        for x in _bus_stop_xs():
            add_node(x, route_y, '<tag k="highway" v="bus_stop"/>')

    members = "".join(f'<member type="way" ref="{w}" role=""/>' for w in subway_ids)
    relation = f'<relation id="1">{members}<tag k="route" v="subway"/></relation>'

    lines.extend(node_defs)
    lines.extend(way_defs)
    lines.append(relation)
    lines.append("</osm>")
    return "\n".join(lines) + "\n"


def _start_ts(rng: random.Random, duration: float) -> float:
    day = rng.randrange(28)
    second = rng.uniform(0.0, 86_400.0 - duration)
    return BASE_TS + day * 86_400.0 + round(second, 1)


def _emit(
    pts: list[GpsPoint], x: float, y: float, ts: float, rng: random.Random, noise_m: float
) -> None:
    lat, lon = _to_latlon(
        x + rng.gauss(0.0, noise_m), y + rng.gauss(0.0, noise_m)
    )
    pts.append(GpsPoint(lon=lon, lat=lat, ts=ts))


def _segment_speed(rng: random.Random, p: ModeParams) -> float:
    return min(max(rng.gauss(p.speed_mean_mps, p.speed_std_mps), p.speed_min_mps), p.speed_max_mps)


def _wandering_segment(
    rng: random.Random, spec: SynthSpec, params: ModeParams, segment_id: str, mode: Mode
) -> TrajectorySegment:
    duration = rng.uniform(*spec.duration_range_s)
    ts = _start_ts(rng, duration)
    end_ts = ts + duration
    x = rng.uniform(-2500.0, 2500.0)
    y = rng.uniform(-2500.0, 2500.0)
    heading = rng.uniform(0.0, 360.0)
    speed = _segment_speed(rng, params)
    pts: list[GpsPoint] = []
    _emit(pts, x, y, ts, rng, spec.gps_noise_m)
    while ts < end_ts:
        dt = rng.uniform(2.0, 5.0)
        ts += dt
        if rng.random() < params.turn_prob:
            heading += rng.choice((-1.0, 1.0)) * rng.uniform(params.turn_min_deg, params.turn_max_deg)
        step = speed * rng.uniform(0.85, 1.15) * dt
        x += step * math.sin(math.radians(heading))
        y += step * math.cos(math.radians(heading))
        if abs(x) > HALF_EXTENT_M - 100.0 or abs(y) > HALF_EXTENT_M - 100.0:
            heading += 180.0
            x = min(max(x, -(HALF_EXTENT_M - 100.0)), HALF_EXTENT_M - 100.0)
            y = min(max(y, -(HALF_EXTENT_M - 100.0)), HALF_EXTENT_M - 100.0)
        _emit(pts, x, y, ts, rng, spec.gps_noise_m)
    return TrajectorySegment(segment_id=segment_id, points=tuple(pts), mode=mode)


def _grid_segment(
    rng: random.Random, spec: SynthSpec, params: ModeParams, segment_id: str
) -> TrajectorySegment:
    """Car: rectilinear motion along grid streets, occasional signal stops."""
    duration = rng.uniform(*spec.duration_range_s)
    ts = _start_ts(rng, duration)
    end_ts = ts + duration
    positions = _grid_positions()
    x = rng.choice(positions[2:-2])
    y = rng.choice(positions[2:-2])
    heading = rng.choice((0.0, 90.0, 180.0, 270.0))
    speed = _segment_speed(rng, params)
    pts: list[GpsPoint] = []
    _emit(pts, x, y, ts, rng, spec.gps_noise_m)
    to_next = GRID_STEP_M
    while ts < end_ts:
        dt = rng.uniform(2.0, 5.0)
        ts += dt
        step = speed * rng.uniform(0.85, 1.15) * dt
        while step > 0.0:
            advance = min(step, to_next)
            x += advance * math.sin(math.radians(heading))
            y += advance * math.cos(math.radians(heading))
            to_next -= advance
            step -= advance
            if to_next <= 0.0:
                to_next = GRID_STEP_M
                if rng.random() < 0.35:
                    heading = (heading + rng.choice((-90.0, 90.0))) % 360.0
                if abs(x) >= HALF_EXTENT_M - GRID_STEP_M or abs(y) >= HALF_EXTENT_M - GRID_STEP_M:
                    heading = (heading + 180.0) % 360.0
        _emit(pts, x, y, ts, rng, spec.gps_noise_m)
        if rng.random() < spec.signal_stop_prob:  # occasional signal stop
            dwell_end = ts + rng.uniform(*spec.signal_stop_range_s)
            while ts < dwell_end and ts < end_ts:
                dt = rng.uniform(2.0, 5.0)
                ts += dt
                _emit(pts, x, y, ts, rng, spec.dwell_noise_m)
    return TrajectorySegment(segment_id=segment_id, points=tuple(pts), mode=Mode.CAR)


def _line_segment(
    rng: random.Random,
    spec: SynthSpec,
    params: ModeParams,
    segment_id: str,
    mode: Mode,
    axis: str,
    fixed_coord: float,
    stop_positions: list[float],
) -> TrajectorySegment:
    """Bus/subway: travel along a fixed line, dwelling at each stop."""
    duration = rng.uniform(*spec.duration_range_s)
    ts = _start_ts(rng, duration)
    end_ts = ts + duration
    idx = rng.randrange(len(stop_positions))
    along = stop_positions[idx]
    direction = rng.choice((-1.0, 1.0))
    speed = _segment_speed(rng, params)
    pts: list[GpsPoint] = []

    def emit(a: float, noise: float) -> None:
        x, y = (a, fixed_coord) if axis == "x" else (fixed_coord, a)
        _emit(pts, x, y, ts, rng, noise)

    emit(along, spec.gps_noise_m)
    spacing = stop_positions[1] - stop_positions[0]
    next_stop = along + direction * spacing
    while ts < end_ts:
        dt = rng.uniform(2.0, 5.0)
        ts += dt
        along += direction * speed * rng.uniform(0.85, 1.15) * dt
        arrived = (direction > 0 and along >= next_stop) or (direction < 0 and along <= next_stop)
        if arrived:
            along = next_stop
            emit(along, spec.gps_noise_m)
            dwell_end = ts + rng.uniform(*spec.dwell_range_s)
            while ts < dwell_end and ts < end_ts:
                dt = rng.uniform(2.0, 5.0)
                ts += dt
                emit(along, spec.dwell_noise_m)
            if abs(next_stop + direction * spacing) > stop_positions[-1]:
                direction = -direction
            next_stop = along + direction * spacing
        else:
            emit(along, spec.gps_noise_m)
    return TrajectorySegment(segment_id=segment_id, points=tuple(pts), mode=mode)


def generate_corpus(spec: SynthSpec = SynthSpec()) -> tuple[list[TrajectorySegment], str]:
    """Generate the labeled corpus and its OSM extract text."""
    rng = random.Random(spec.seed)
    segments: list[TrajectorySegment] = []
    stations = _subway_station_offsets()
    bus_stops = _bus_stop_xs()
    for i in range(spec.segments_per_mode):
        segments.append(
            _wandering_segment(rng, spec, spec.walk, f"walk_{i:04d}", Mode.WALK)
        )
        segments.append(
            _wandering_segment(rng, spec, spec.bike, f"bike_{i:04d}", Mode.BIKE)
        )
        segments.append(
            _line_segment(
                rng, spec, spec.bus, f"bus_{i:04d}", Mode.BUS,
                axis="x", fixed_coord=rng.choice(BUS_ROUTE_YS), stop_positions=bus_stops,
            )
        )
        segments.append(_grid_segment(rng, spec, spec.car, f"car_{i:04d}"))
        if rng.random() < 0.5:
            axis, fixed = "x", SUBWAY_EW_Y
        else:
            axis, fixed = "y", SUBWAY_NS_X
        segments.append(
            _line_segment(
                rng, spec, spec.subway, f"subway_{i:04d}", Mode.SUBWAY,
                axis=axis, fixed_coord=fixed, stop_positions=stations,
            )
        )
    return segments, build_osm_xml()
