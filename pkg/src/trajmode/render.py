"""Deterministic map-scene rendering for trajectory segments.

The scene is the segment drawn in red over its surrounding road network,
subway lines, and bus stations, inside a buffer-expanded bounding box.
Output is a plate carree (equirectangular) SVG document whose bytes are a
pure function of the inputs; a raster export is optional and only needed
when shipping scenes to a remote image embedder.
"""

import io
import math
import re
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .osm import OsmExtract
from .trajectory import TrajectorySegment

LatLon = tuple[float, float]
Polyline = list[LatLon]

ROAD_HIGHWAY_VALUES = frozenset(
    {
        "motorway",
        "trunk",
        "primary",
        "secondary",
        "tertiary",
        "residential",
        "unclassified",
        "service",
        "footway",
        "cycleway",
    }
)

MIN_DEGENERATE_EXTENT_DEG = 0.001


class Bbox(NamedTuple):
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    @property
    def lon_span(self) -> float:
        return self.max_lon - self.min_lon

    @property
    def lat_span(self) -> float:
        return self.max_lat - self.min_lat

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat


@dataclass(frozen=True)
class SceneLayers:
    roads: tuple[tuple[LatLon, ...], ...]
    subway_lines: tuple[tuple[LatLon, ...], ...]
    bus_stations: tuple[LatLon, ...]


@dataclass(frozen=True)
class SceneStyle:
    background: str = "#ffffff"
    road_color: str = "#808080"
    road_width_px: float = 1.0
    subway_color: str = "#0000ff"
    subway_width_px: float = 2.0
    bus_color: str = "#008000"
    bus_radius_px: float = 3.0
    trajectory_color: str = "#ff0000"
    trajectory_width_px: float = 2.0
    marker_radius_px: float = 4.0
    version: str = "v1"


@dataclass(frozen=True)
class SceneImage:
    segment_id: str
    width_px: int
    height_px: int
    bbox: Bbox
    vector_doc: str
    style_version: str
    raster: Optional[bytes] = None


def scene_bbox(seg: TrajectorySegment, buffer_frac: float = 0.2) -> Bbox:
    """Segment extent expanded by ``buffer_frac`` of its span on each side.

    A degenerate extent axis (zero span) is first widened to
    MIN_DEGENERATE_EXTENT_DEG so single-point and straight-line segments
    still get a usable box.
    """
    if buffer_frac <= 0:
        raise ValueError("buffer_frac must be positive")
    lons = [p.lon for p in seg.points]
    lats = [p.lat for p in seg.points]
    min_lon, max_lon = min(lons), max(lons)
    min_lat, max_lat = min(lats), max(lats)
    if max_lon - min_lon < MIN_DEGENERATE_EXTENT_DEG:
        mid = (min_lon + max_lon) / 2.0
        min_lon, max_lon = mid - MIN_DEGENERATE_EXTENT_DEG / 2, mid + MIN_DEGENERATE_EXTENT_DEG / 2
    if max_lat - min_lat < MIN_DEGENERATE_EXTENT_DEG:
        mid = (min_lat + max_lat) / 2.0
        min_lat, max_lat = mid - MIN_DEGENERATE_EXTENT_DEG / 2, mid + MIN_DEGENERATE_EXTENT_DEG / 2
    pad_lon = (max_lon - min_lon) * buffer_frac
    pad_lat = (max_lat - min_lat) * buffer_frac
    return Bbox(min_lon - pad_lon, min_lat - pad_lat, max_lon + pad_lon, max_lat + pad_lat)


def _is_road(tags: dict[str, str]) -> bool:
    value = tags.get("highway")
    if value is None:
        return False
    if value in ROAD_HIGHWAY_VALUES:
        return True
    return value.endswith("_link") and value[: -len("_link")] in ROAD_HIGHWAY_VALUES


def _is_bus_station(tags: dict[str, str]) -> bool:
    if tags.get("highway") == "bus_stop":
        return True
    return tags.get("public_transport") == "platform" and tags.get("bus") == "yes"


def extract_layers(osm: OsmExtract, bbox: Bbox) -> SceneLayers:
    """Pull the road/subway/bus-station layers inside the box.

    Roads are drivable/walkable highway ways; subway lines are
    railway=subway ways plus member ways of route=subway relations (the
    latter resolved leniently, since relation members often fall outside
    an extract). All polylines are clipped to the box; the clip only ever
    introduces vertices on the box edges.
    """
    roads: list[tuple[LatLon, ...]] = []
    subways: list[tuple[LatLon, ...]] = []

    for wid, way in osm.ways.items():
        if _is_road(way.tags):
            coords = [osm.nodes[ref] for ref in way.node_ids]
            roads.extend(tuple(piece) for piece in clip_polyline(coords, bbox))

    subway_way_ids: list[int] = [
        wid for wid, way in osm.ways.items() if way.tags.get("railway") == "subway"
    ]
    seen = set(subway_way_ids)
    for relation in osm.relations.values():
        if relation.tags.get("route") != "subway":
            continue
        for member in relation.members:
            if member.type == "way" and member.ref in osm.ways and member.ref not in seen:
                subway_way_ids.append(member.ref)
                seen.add(member.ref)
    for wid in subway_way_ids:
        coords = [osm.nodes[ref] for ref in osm.ways[wid].node_ids]
        subways.extend(tuple(piece) for piece in clip_polyline(coords, bbox))

    stations = tuple(
        osm.nodes[nid]
        for nid, tags in osm.node_tags.items()
        if _is_bus_station(tags) and bbox.contains(*osm.nodes[nid])
    )
    return SceneLayers(roads=tuple(roads), subway_lines=tuple(subways), bus_stations=stations)


def _clip_edge(ax: float, ay: float, bx: float, by: float, bbox: Bbox):
    """Liang-Barsky clip of segment (a, b) in (lon, lat) space."""
    dx, dy = bx - ax, by - ay
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, ax - bbox.min_lon),
        (dx, bbox.max_lon - ax),
        (-dy, ay - bbox.min_lat),
        (dy, bbox.max_lat - ay),
    ):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return None
            if r > t0:
                t0 = r
        else:
            if r < t0:
                return None
            if r < t1:
                t1 = r
    start = (ax, ay) if t0 == 0.0 else (ax + t0 * dx, ay + t0 * dy)
    end = (bx, by) if t1 == 1.0 else (ax + t1 * dx, ay + t1 * dy)
    return start, end


def clip_polyline(coords: Sequence[LatLon], bbox: Bbox) -> list[Polyline]:
    """Clip a (lat, lon) polyline to the box, splitting where it leaves."""
    pieces: list[Polyline] = []
    current: Polyline = []
    for (alat, alon), (blat, blon) in zip(coords, coords[1:]):
        clipped = _clip_edge(alon, alat, blon, blat, bbox)
        if clipped is None:
            if len(current) >= 2:
                pieces.append(current)
            current = []
            continue
        (sx, sy), (ex, ey) = clipped
        start, end = (sy, sx), (ey, ex)
        if not current:
            current = [start, end]
        elif current[-1] == start:
            current.append(end)
        else:
            if len(current) >= 2:
                pieces.append(current)
            current = [start, end]
    if len(current) >= 2:
        pieces.append(current)
    return pieces


def canvas_size(bbox: Bbox, max_px: int = 768) -> tuple[int, int]:
    """Canvas dimensions fitting ``max_px`` with latitude-corrected aspect.

    Plate carree stretches longitude by 1/cos(lat); correcting the canvas
    aspect keeps city-scale scenes visually undistorted.
    """
    lat_mid = (bbox.min_lat + bbox.max_lat) / 2.0
    visual_aspect = (bbox.lon_span * math.cos(math.radians(lat_mid))) / bbox.lat_span
    if visual_aspect >= 1.0:
        return max_px, max(1, round(max_px / visual_aspect))
    return max(1, round(max_px * visual_aspect)), max_px


def project(bbox: Bbox, width_px: int, height_px: int, lat: float, lon: float) -> tuple[float, float]:
    """Map (lat, lon) inside the box to canvas pixels; clamped to the canvas."""
    x = (lon - bbox.min_lon) / bbox.lon_span * width_px
    y = (bbox.max_lat - lat) / bbox.lat_span * height_px
    return min(max(x, 0.0), float(width_px)), min(max(y, 0.0), float(height_px))


def unproject(bbox: Bbox, width_px: int, height_px: int, x: float, y: float) -> LatLon:
    """Exact inverse of :func:`project` for points inside the canvas."""
    lon = bbox.min_lon + x / width_px * bbox.lon_span
    lat = bbox.max_lat - y / height_px * bbox.lat_span
    return lat, lon


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _polyline_svg(points_px: Sequence[tuple[float, float]], color: str, width: float) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points_px)
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def render_scene(
    seg: TrajectorySegment,
    layers: SceneLayers,
    bbox: Bbox,
    style: SceneStyle = SceneStyle(),
    max_px: int = 768,
    raster: bool = False,
) -> SceneImage:
    """Compose the scene SVG (and optionally a PNG) for one segment.

    Draw order is roads, subway lines, bus stations, then the trajectory
    in red with a circle start marker and a square end marker; identical
    inputs produce byte-identical SVG text.
    """
    if bbox.lon_span <= 0 or bbox.lat_span <= 0:
        raise ValueError("bbox has zero area")
    for p in seg.points:
        if not bbox.contains(p.lat, p.lon):
            raise ValueError(f"segment {seg.segment_id}: point outside scene bbox")

    width_px, height_px = canvas_size(bbox, max_px)

    def px(lat: float, lon: float) -> tuple[float, float]:
        return project(bbox, width_px, height_px, lat, lon)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="0 0 {width_px} {height_px}" data-style-version="{style.version}">',
        f'<rect width="{width_px}" height="{height_px}" fill="{style.background}"/>',
        '<g id="roads">',
    ]
    for line in layers.roads:
        parts.append(_polyline_svg([px(*c) for c in line], style.road_color, style.road_width_px))
    parts.append("</g>")
    parts.append('<g id="subway_lines">')
    for line in layers.subway_lines:
        parts.append(
            _polyline_svg([px(*c) for c in line], style.subway_color, style.subway_width_px)
        )
    parts.append("</g>")
    parts.append('<g id="bus_stations">')
    for lat, lon in layers.bus_stations:
        x, y = px(lat, lon)
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{style.bus_radius_px}" fill="{style.bus_color}"/>'
        )
    parts.append("</g>")
    parts.append('<g id="trajectory">')
    traj_px = [px(p.lat, p.lon) for p in seg.points]
    parts.append(_polyline_svg(traj_px, style.trajectory_color, style.trajectory_width_px))
    sx, sy = traj_px[0]
    ex, ey = traj_px[-1]
    r = style.marker_radius_px
    parts.append(
        f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="{r}" fill="none" '
        f'stroke="{style.trajectory_color}" stroke-width="{style.trajectory_width_px}"/>'
    )
    parts.append(
        f'<rect x="{_fmt(ex - r)}" y="{_fmt(ey - r)}" width="{_fmt(2 * r)}" height="{_fmt(2 * r)}" '
        f'fill="none" stroke="{style.trajectory_color}" stroke-width="{style.trajectory_width_px}"/>'
    )
    parts.append("</g>")
    parts.append("</svg>")
    doc = "\n".join(parts) + "\n"

    raster_bytes = (
        _rasterize(seg, layers, bbox, style, width_px, height_px) if raster else None
    )
    return SceneImage(
        segment_id=seg.segment_id,
        width_px=width_px,
        height_px=height_px,
        bbox=bbox,
        vector_doc=doc,
        style_version=style.version,
        raster=raster_bytes,
    )


def _rasterize(seg, layers, bbox, style, width_px, height_px) -> bytes:
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (width_px, height_px), style.background)
    draw = ImageDraw.Draw(img)

    def px(lat: float, lon: float) -> tuple[float, float]:
        return project(bbox, width_px, height_px, lat, lon)

    for line in layers.roads:
        draw.line([px(*c) for c in line], fill=style.road_color, width=round(style.road_width_px))
    for line in layers.subway_lines:
        draw.line([px(*c) for c in line], fill=style.subway_color, width=round(style.subway_width_px))
    for lat, lon in layers.bus_stations:
        x, y = px(lat, lon)
        r = style.bus_radius_px
        draw.ellipse((x - r, y - r, x + r, y + r), fill=style.bus_color)
    traj = [px(p.lat, p.lon) for p in seg.points]
    draw.line(traj, fill=style.trajectory_color, width=round(style.trajectory_width_px))
    r = style.marker_radius_px
    sx, sy = traj[0]
    ex, ey = traj[-1]
    draw.ellipse((sx - r, sy - r, sx + r, sy + r), outline=style.trajectory_color)
    draw.rectangle((ex - r, ey - r, ex + r, ey + r), outline=style.trajectory_color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


_TRAJ_GROUP_RE = re.compile(r'<g id="trajectory">\n<polyline points="([^"]*)"')


def trajectory_pixels(scene: SceneImage) -> list[tuple[float, float]]:
    """Recover the trajectory's pixel polyline from the vector document."""
    m = _TRAJ_GROUP_RE.search(scene.vector_doc)
    if m is None:
        raise ValueError("vector document has no trajectory polyline")
    return [
        (float(x), float(y))
        for x, y in (pair.split(",") for pair in m.group(1).split() if pair)
    ]


def scene_sidecar(scene: SceneImage) -> dict:
    """Sidecar record stored next to each rendered scene file."""
    return {
        "segment_id": scene.segment_id,
        "bbox": [scene.bbox.min_lon, scene.bbox.min_lat, scene.bbox.max_lon, scene.bbox.max_lat],
        "width_px": scene.width_px,
        "height_px": scene.height_px,
        "style_version": scene.style_version,
    }


def scene_from_sidecar(rec: dict, vector_doc: str, raster: Optional[bytes] = None) -> SceneImage:
    return SceneImage(
        segment_id=rec["segment_id"],
        width_px=rec["width_px"],
        height_px=rec["height_px"],
        bbox=Bbox(*rec["bbox"]),
        vector_doc=vector_doc,
        style_version=rec["style_version"],
        raster=raster,
    )
