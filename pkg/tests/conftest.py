import math

import pytest

from trajmode.trajectory import GpsPoint, Mode, TrajectorySegment

# Closed-form arc length of one equatorial degree on the R=6371 km sphere;
# used to construct fixtures in meters independently of the haversine path.
METERS_PER_DEG_EQUATOR = 6_371_000.0 * math.pi / 180.0


def equatorial_point(east_m: float, ts: float, north_m: float = 0.0) -> GpsPoint:
    """Point east/north of (0, 0) by the given meters, via arc-length math."""
    return GpsPoint(
        lon=east_m / METERS_PER_DEG_EQUATOR,
        lat=north_m / METERS_PER_DEG_EQUATOR,
        ts=ts,
    )


def segment_from_offsets(
    offsets: list[tuple[float, float, float]],
    segment_id: str = "seg_test",
    mode: Mode | None = None,
) -> TrajectorySegment:
    """Build a segment from (east_m, north_m, ts) triples near (0, 0)."""
    return TrajectorySegment(
        segment_id=segment_id,
        points=tuple(equatorial_point(e, ts, n) for e, n, ts in offsets),
        mode=mode,
    )


@pytest.fixture
def appendix_like_segment() -> TrajectorySegment:
    """Segment with path ~2000 m, straight-line ~687 m, duration 645 s.

    Built as an east-west out-and-back on the equator: forward 1343.5 m,
    back 656.5 m, so the path sums to 2000 m and the chord is 687 m.
    """
    return segment_from_offsets(
        [
            (0.0, 0.0, 0.0),
            (1343.5, 0.0, 433.0),
            (687.0, 0.0, 645.0),
        ],
        segment_id="appendix_like",
    )
