"""Point-sequence cleaning and label-driven segmentation.

Cleaning is a single greedy forward pass: it never fails, it only drops
points. Segmentation matches cleaned points against labels.txt intervals,
splits runs at large time gaps, and discards runs too short to carry
meaningful dynamics.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

from .geo import haversine_m
from .trajectory import GpsPoint, LabelInterval, Mode, TrajectorySegment, normalize_mode


class OverlappingLabelsError(ValueError):
    """Two label intervals overlap in time."""


@dataclass(frozen=True)
class CleaningConfig:
    max_speed_mps: float = 83.3  # ~300 km/h; anything faster is a GPS glitch
    max_gap_s: float = 1200.0
    min_points: int = 10
    min_duration_s: float = 60.0

    def __post_init__(self) -> None:
        if self.max_speed_mps <= 0:
            raise ValueError("max_speed_mps must be positive")
        if self.max_gap_s <= 0:
            raise ValueError("max_gap_s must be positive")
        if self.min_points < 2:
            raise ValueError("min_points must be at least 2")
        if self.min_duration_s <= 0:
            raise ValueError("min_duration_s must be positive")


def clean(points: Sequence[GpsPoint], cfg: CleaningConfig = CleaningConfig()) -> list[GpsPoint]:
    """Drop duplicate/backward timestamps and speed-outlier points.

    Keeps the first point of any timestamp collision, drops any point whose
    implied speed from the previously kept point exceeds max_speed_mps
    (the predecessor is retained), and preserves order otherwise. The
    output is strictly increasing in ts; the pass is idempotent.
    """
    out: list[GpsPoint] = []
    for p in points:
        if not out:
            out.append(p)
            continue
        prev = out[-1]
        dt = p.ts - prev.ts
        if dt <= 0:
            continue
        if haversine_m(prev.lat, prev.lon, p.lat, p.lon) / dt > cfg.max_speed_mps:
            continue
        out.append(p)
    return out


def segment_by_labels(
    points: Sequence[GpsPoint],
    labels: Sequence[LabelInterval],
    cfg: CleaningConfig = CleaningConfig(),
    id_prefix: str = "seg",
) -> list[TrajectorySegment]:
    """Cut cleaned points into mode-labeled trajectory segments.

    For each interval whose raw mode normalizes into the five-mode
    vocabulary, the maximal run of points with start_ts <= ts <= end_ts is
    taken, split wherever consecutive points are more than max_gap_s
    apart, and each resulting run is kept only if it has at least
    min_points points and at least min_duration_s of duration. Each point
    is consumed by at most one interval (ties at a shared boundary go to
    the earlier interval). Intervals are sorted by start time first, so
    output is independent of label-file line order.
    """
    ordered = sorted(labels, key=lambda iv: (iv.start_ts, iv.end_ts))
    for a, b in zip(ordered, ordered[1:]):
        if b.start_ts < a.end_ts:
            raise OverlappingLabelsError(
                f"label intervals overlap: [{a.start_ts}, {a.end_ts}] {a.raw_mode!r} vs "
                f"[{b.start_ts}, {b.end_ts}] {b.raw_mode!r}"
            )

    segments: list[TrajectorySegment] = []
    counter = 0
    i = 0
    n = len(points)
    for interval in ordered:
        while i < n and points[i].ts < interval.start_ts:
            i += 1
        run: list[GpsPoint] = []
        while i < n and points[i].ts <= interval.end_ts:
            run.append(points[i])
            i += 1
        mode = normalize_mode(interval.raw_mode)
        if mode is None or not run:
            continue
        for piece in _split_on_gaps(run, cfg.max_gap_s):
            if len(piece) < cfg.min_points:
                continue
            if piece[-1].ts - piece[0].ts < cfg.min_duration_s:
                continue
            segments.append(
                TrajectorySegment(
                    segment_id=f"{id_prefix}_{counter:05d}",
                    points=tuple(piece),
                    mode=mode,
                )
            )
            counter += 1
    return segments


def _split_on_gaps(run: list[GpsPoint], max_gap_s: float) -> list[list[GpsPoint]]:
    pieces: list[list[GpsPoint]] = [[run[0]]]
    for prev, cur in zip(run, run[1:]):
        if cur.ts - prev.ts > max_gap_s:
            pieces.append([cur])
        else:
            pieces[-1].append(cur)
    return pieces
