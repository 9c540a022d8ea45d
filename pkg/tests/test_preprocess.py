import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajmode.preprocess import (
    CleaningConfig,
    OverlappingLabelsError,
    clean,
    segment_by_labels,
)
from trajmode.trajectory import GpsPoint, LabelInterval, Mode

from conftest import equatorial_point


class TestCleaningConfig:
    def test_defaults_valid(self):
        cfg = CleaningConfig()
        assert cfg.max_speed_mps == 83.3
        assert cfg.min_points == 10

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_speed_mps": 0.0},
            {"max_gap_s": -1.0},
            {"min_points": 1},
            {"min_duration_s": 0.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            CleaningConfig(**kwargs)


class TestClean:
    def test_duplicate_timestamp_dropped(self):
        pts = [equatorial_point(0, 0.0), equatorial_point(10, 0.0), equatorial_point(20, 1.0)]
        out = clean(pts)
        assert out == [pts[0], pts[2]]

    def test_speed_outlier_dropped(self):
        # Middle point implies 500 km/h (~139 m/s) from the first: 278 m in 2 s.
        pts = [
            equatorial_point(0, 0.0),
            equatorial_point(278, 2.0),
            equatorial_point(288, 4.0),
        ]
        out = clean(pts)
        assert len(out) == 2
        assert out[0] == pts[0]
        # The successor is judged against the retained predecessor (288 m in 4 s is fine).
        assert out[1] == pts[2]

    def test_clean_sequence_unchanged(self):
        pts = [equatorial_point(i * 10, float(i * 10)) for i in range(5)]
        assert clean(pts) == pts

    def test_backward_timestamp_dropped(self):
        pts = [equatorial_point(0, 100.0), equatorial_point(5, 50.0), equatorial_point(10, 110.0)]
        out = clean(pts)
        assert [p.ts for p in out] == [100.0, 110.0]

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-500, max_value=500),
                st.floats(min_value=0, max_value=1000),
            ),
            max_size=30,
        )
    )
    def test_idempotent(self, raw):
        pts = [equatorial_point(e, ts) for e, ts in raw]
        once = clean(pts)
        assert clean(once) == once
        assert all(b.ts > a.ts for a, b in zip(once, once[1:]))


def walk_points(start_ts: float, n: int, spacing_s: float = 10.0) -> list[GpsPoint]:
    return [equatorial_point(i * 10.0, start_ts + i * spacing_s) for i in range(n)]


class TestSegmentByLabels:
    def test_single_interval_single_segment(self):
        pts = walk_points(1000.0, 100)
        labels = [LabelInterval(start_ts=900.0, end_ts=2500.0, raw_mode="walk")]
        segs = segment_by_labels(pts, labels)
        assert len(segs) == 1
        assert segs[0].mode is Mode.WALK
        assert len(segs[0].points) == 100

    def test_gap_splits_segment(self):
        # 100 points, 30-minute hole after point 40 (gap threshold 1200 s).
        pts = walk_points(0.0, 40)
        pts += [equatorial_point(400 + i * 10.0, 390.0 + 1800.0 + i * 10.0) for i in range(60)]
        labels = [LabelInterval(start_ts=0.0, end_ts=10_000.0, raw_mode="walk")]
        segs = segment_by_labels(pts, labels)
        assert [len(s.points) for s in segs] == [40, 60]

    def test_unmapped_mode_yields_nothing(self):
        pts = walk_points(0.0, 50)
        labels = [LabelInterval(start_ts=0.0, end_ts=10_000.0, raw_mode="train")]
        assert segment_by_labels(pts, labels) == []

    def test_overlapping_labels_error(self):
        labels = [
            LabelInterval(start_ts=0.0, end_ts=100.0, raw_mode="walk"),
            LabelInterval(start_ts=50.0, end_ts=150.0, raw_mode="bus"),
        ]
        with pytest.raises(OverlappingLabelsError, match="overlap"):
            segment_by_labels([], labels)

    def test_short_runs_discarded(self):
        cfg = CleaningConfig(min_points=10, min_duration_s=60.0)
        pts = walk_points(0.0, 5)  # too few points
        labels = [LabelInterval(start_ts=0.0, end_ts=500.0, raw_mode="walk")]
        assert segment_by_labels(pts, labels, cfg) == []

    def test_min_duration_discarded(self):
        cfg = CleaningConfig(min_points=2, min_duration_s=60.0)
        pts = walk_points(0.0, 10, spacing_s=1.0)  # 9 s total
        labels = [LabelInterval(start_ts=0.0, end_ts=500.0, raw_mode="walk")]
        assert segment_by_labels(pts, labels, cfg) == []

    def test_points_stay_inside_their_interval(self):
        pts = walk_points(0.0, 200)
        labels = [
            LabelInterval(start_ts=0.0, end_ts=500.0, raw_mode="walk"),
            LabelInterval(start_ts=505.0, end_ts=1200.0, raw_mode="bus"),
        ]
        segs = segment_by_labels(pts, labels, CleaningConfig(min_points=2, min_duration_s=10.0))
        by_mode = {s.mode: s for s in segs}
        for interval, mode in zip(labels, (Mode.WALK, Mode.BUS)):
            for p in by_mode[mode].points:
                assert interval.start_ts <= p.ts <= interval.end_ts

    def test_label_order_does_not_matter(self):
        pts = walk_points(0.0, 200)
        labels = [
            LabelInterval(start_ts=0.0, end_ts=500.0, raw_mode="walk"),
            LabelInterval(start_ts=505.0, end_ts=1200.0, raw_mode="bus"),
        ]
        cfg = CleaningConfig(min_points=2, min_duration_s=10.0)
        forward = segment_by_labels(pts, labels, cfg)
        backward = segment_by_labels(pts, list(reversed(labels)), cfg)
        assert forward == backward

    def test_output_segments_satisfy_invariants(self):
        pts = walk_points(0.0, 100)
        labels = [LabelInterval(start_ts=0.0, end_ts=10_000.0, raw_mode="bike")]
        for seg in segment_by_labels(pts, labels):
            assert len(seg.points) >= 2
            assert all(a.ts < b.ts for a, b in zip(seg.points, seg.points[1:]))
