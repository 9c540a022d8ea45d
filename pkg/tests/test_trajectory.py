import calendar
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajmode.trajectory import (
    FormatError,
    GpsPoint,
    LabelInterval,
    Mode,
    TrajectorySegment,
    normalize_mode,
    parse_labels,
    parse_plt,
    plt_record,
    read_segments,
    write_segments,
)

PLT_HEADER = (
    "Geolife trajectory\n"
    "WGS 84\n"
    "Altitude is in Feet\n"
    "Reserved 3\n"
    "0,2,255,My Track,0,0,2,8421376\n"
    "0\n"
)


def make_plt(records: list[str]) -> bytes:
    return (PLT_HEADER + "".join(r + "\n" for r in records)).encode()


class TestParsePlt:
    def test_single_record(self):
        # Expected epoch computed with an independent calendar oracle.
        expected_ts = calendar.timegm(time.strptime("2008-10-23 02:53:04", "%Y-%m-%d %H:%M:%S"))
        assert expected_ts == 1224730384
        pts = parse_plt(
            make_plt(["39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04"])
        )
        assert len(pts) == 1
        assert pts[0].lat == 39.984702
        assert pts[0].lon == 116.318417
        assert pts[0].ts == float(expected_ts)

    def test_empty_record_section(self):
        assert parse_plt(make_plt([])) == []

    def test_out_of_range_latitude_names_line(self):
        with pytest.raises(FormatError, match="line 7"):
            parse_plt(make_plt(["95.0,116.3,0,0,39744.0,2008-10-23,02:53:04"]))

    def test_too_few_fields(self):
        with pytest.raises(FormatError, match="line 8.*fields"):
            parse_plt(
                make_plt(
                    [
                        "39.9,116.3,0,0,39744.0,2008-10-23,02:53:04",
                        "39.9,116.3,0",
                    ]
                )
            )

    def test_unparsable_number(self):
        with pytest.raises(FormatError, match="line 7"):
            parse_plt(make_plt(["abc,116.3,0,0,39744.0,2008-10-23,02:53:04"]))

    def test_too_few_header_lines(self):
        with pytest.raises(FormatError, match="header"):
            parse_plt(b"only\nthree\nlines\n")

    def test_output_length_equals_record_count(self):
        records = [
            f"39.98470{i},116.31841{i},0,492,39744.0,2008-10-23,02:53:{4 + i:02d}"
            for i in range(5)
        ]
        assert len(parse_plt(make_plt(records))) == 5

    @given(
        lat=st.floats(min_value=-90, max_value=90, allow_nan=False),
        lon=st.floats(min_value=-180, max_value=180, allow_nan=False),
        ts=st.integers(min_value=0, max_value=4_000_000_000),
    )
    def test_record_round_trip(self, lat, lon, ts):
        point = GpsPoint(lon=lon, lat=lat, ts=float(ts))
        reparsed = parse_plt(make_plt([plt_record(point)]))
        assert reparsed == [point]


LABELS_HEADER = "Start Time\tEnd Time\tTransportation Mode\n"


class TestParseLabels:
    def test_single_interval(self):
        data = (LABELS_HEADER + "2008/10/23 02:53:04\t2008/10/23 03:10:00\twalk\n").encode()
        intervals = parse_labels(data)
        assert len(intervals) == 1
        assert intervals[0].raw_mode == "walk"
        # Duration verified against an independent calendar oracle.
        assert intervals[0].end_ts - intervals[0].start_ts == 1016.0

    def test_header_only(self):
        assert parse_labels(LABELS_HEADER.encode()) == []

    def test_end_before_start(self):
        data = (LABELS_HEADER + "2008/10/23 03:10:00\t2008/10/23 02:53:04\tbus\n").encode()
        with pytest.raises(FormatError, match="line 2"):
            parse_labels(data)

    def test_unparsable_timestamp(self):
        data = (LABELS_HEADER + "2008-10-23 02:53:04\t2008/10/23 03:10:00\tbus\n").encode()
        with pytest.raises(FormatError, match="line 2"):
            parse_labels(data)


class TestNormalizeMode:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Bus", Mode.BUS),
            ("walk", Mode.WALK),
            ("WALK", Mode.WALK),
            ("subway", Mode.SUBWAY),
            ("bike", Mode.BIKE),
            ("car", Mode.CAR),
        ],
    )
    def test_known_modes(self, raw, expected):
        assert normalize_mode(raw) is expected

    @pytest.mark.parametrize("raw", ["train", "taxi", "airplane", "boat", "", "run"])
    def test_unknown_modes_absent(self, raw):
        assert normalize_mode(raw) is None

    @given(st.text(max_size=20))
    def test_idempotent_on_image(self, raw):
        mode = normalize_mode(raw)
        if mode is not None:
            assert normalize_mode(mode.value) is mode


class TestSegmentTypes:
    def test_needs_two_points(self):
        with pytest.raises(ValueError, match="2 points"):
            TrajectorySegment(segment_id="x", points=(GpsPoint(0, 0, 0),))

    def test_timestamps_strictly_increasing(self):
        with pytest.raises(ValueError, match="increasing"):
            TrajectorySegment(
                segment_id="x",
                points=(GpsPoint(0, 0, 5), GpsPoint(0.001, 0, 5)),
            )

    def test_point_range_validation(self):
        with pytest.raises(ValueError):
            GpsPoint(lon=181.0, lat=0.0, ts=0.0)
        with pytest.raises(ValueError):
            GpsPoint(lon=0.0, lat=-91.0, ts=0.0)
        with pytest.raises(ValueError):
            GpsPoint(lon=0.0, lat=0.0, ts=float("nan"))

    def test_label_interval_validation(self):
        with pytest.raises(ValueError):
            LabelInterval(start_ts=10.0, end_ts=10.0, raw_mode="bus")


class TestInterchange:
    def test_round_trip(self, tmp_path):
        seg = TrajectorySegment(
            segment_id="u000_00001",
            points=(GpsPoint(116.3, 39.9, 100.0), GpsPoint(116.31, 39.91, 160.0)),
            mode=Mode.BIKE,
        )
        path = tmp_path / "segments.jsonl"
        assert write_segments(path, [seg]) == 1
        assert read_segments(path) == [seg]

    def test_unlabeled_segment_round_trip(self, tmp_path):
        seg = TrajectorySegment(
            segment_id="s",
            points=(GpsPoint(0.0, 0.0, 0.0), GpsPoint(0.001, 0.0, 10.0)),
        )
        path = tmp_path / "segments.jsonl"
        write_segments(path, [seg])
        loaded = read_segments(path)
        assert loaded[0].mode is None
        assert loaded == [seg]
