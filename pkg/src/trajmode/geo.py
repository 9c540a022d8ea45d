"""Spherical-earth geometry helpers shared across the pipeline.

All distances are in meters on a sphere of radius 6,371,000 m; all angles
are in degrees unless noted. Inputs are WGS-84-style (lat, lon) pairs.
"""

import math

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two points, in meters.

    Symmetric in its arguments and exactly zero for identical coordinates.
    """
    if lat1 == lat2 and lon1 == lon2:
        return 0.0
    phi1, lam1, phi2, lam2 = map(math.radians, (lat1, lon1, lat2, lon2))
    dphi = phi2 - phi1
    dlam = lam2 - lam1
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def initial_bearing_deg(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Initial bearing from the first point to the second, in [0, 360).

    0 = north, 90 = east (standard spherical initial-bearing formula).
    """
    phi1, lam1, phi2, lam2 = map(math.radians, (lat1, lon1, lat2, lon2))
    dlam = lam2 - lam1
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.degrees(math.atan2(y, x)) % 360.0


def heading_change_deg(bearing_a: float, bearing_b: float) -> float:
    """Absolute heading change between two bearings, folded into [0, 180]."""
    d = abs(bearing_a - bearing_b) % 360.0
    return 360.0 - d if d > 180.0 else d


def destination(lat: float, lon: float, bearing_deg: float, distance_m: float) -> tuple[float, float]:
    """Point reached by travelling ``distance_m`` along ``bearing_deg``.

    Spherical direct problem; returns (lat, lon) in degrees.
    """
    phi1 = math.radians(lat)
    lam1 = math.radians(lon)
    theta = math.radians(bearing_deg)
    delta = distance_m / EARTH_RADIUS_M
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return math.degrees(phi2), ((math.degrees(lam2) + 180.0) % 360.0) - 180.0


def point_segment_distance(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> float:
    """Euclidean distance from point P to segment AB in the plane."""
    abx, aby = bx - ax, by - ay
    apx, apy = px - ax, py - ay
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return math.hypot(apx, apy)
    t = max(0.0, min(1.0, (apx * abx + apy * aby) / denom))
    return math.hypot(px - (ax + t * abx), py - (ay + t * aby))


def local_xy_m(lat: float, lon: float, lat0: float, lon0: float) -> tuple[float, float]:
    """Project (lat, lon) to local tangent-plane meters around (lat0, lon0).

    Equirectangular approximation; adequate at city scale.
    """
    mpd = EARTH_RADIUS_M * math.pi / 180.0
    x = (lon - lon0) * mpd * math.cos(math.radians(lat0))
    y = (lat - lat0) * mpd
    return x, y
