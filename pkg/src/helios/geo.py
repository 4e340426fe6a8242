"""Geodesic distance and nearest-pixel lookup on irregular lat/lon grids."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, OutOfBounds

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)

MEAN_EARTH_RADIUS = 6371008.8  # meters, sphere fallback only

VINCENTY_TOL = 1e-12
VINCENTY_MAX_ITER = 200


def normalize_lon(lon: float) -> float:
    """Wrap a longitude into (-180, 180]."""
    lon = math.fmod(lon, 360.0)
    if lon <= -180.0:
        lon += 360.0
    elif lon > 180.0:
        lon -= 360.0
    return lon


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in degrees, lon normalized to (-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        object.__setattr__(self, "lon", normalize_lon(self.lon))


@dataclass(frozen=True, eq=False)
class PixelGrid:
    """Per-cell geolocation of a rows x cols pixel grid (row-major arrays)."""

    rows: int
    cols: int
    lat_of: np.ndarray
    lon_of: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, PixelGrid)
            and (self.rows, self.cols) == (other.rows, other.cols)
            and np.array_equal(self.lat_of, other.lat_of)
            and np.array_equal(self.lon_of, other.lon_of)
        )

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have positive extents")
        lat = np.asarray(self.lat_of, dtype=np.float64).reshape(-1)
        lon = np.asarray(self.lon_of, dtype=np.float64).reshape(-1)
        if lat.size != self.rows * self.cols or lon.size != self.rows * self.cols:
            raise ValueError("lat_of/lon_of must have rows*cols entries")
        if np.any(lat < -90.0) or np.any(lat > 90.0):
            raise ValueError("grid latitude outside [-90, 90]")
        object.__setattr__(self, "lat_of", lat)
        object.__setattr__(self, "lon_of", np.array([normalize_lon(x) for x in lon]))

    def point(self, row: int, col: int) -> GeoPoint:
        i = row * self.cols + col
        return GeoPoint(self.lat_of[i], self.lon_of[i])


@dataclass(frozen=True)
class WindowIndex:
    """Top-left corner and edge length of a square window inside a grid."""

    row_start: int
    col_start: int
    size: int


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance on the mean-radius sphere, in meters."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * MEAN_EARTH_RADIUS * math.asin(min(1.0, math.sqrt(h)))


def vincenty_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Inverse geodesic distance on the WGS84 spheroid, in meters.

    Iterates the longitude difference to |dL| < 1e-12 (at most 200 rounds) and
    raises NonConvergence for near-antipodal pairs where the iteration stalls.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    if (b.lat, b.lon) < (a.lat, a.lon):
        a, b = b, a  # canonical order makes the result exactly symmetric

    f = WGS84_F
    L = math.radians(b.lon - a.lon)
    u1 = math.atan((1.0 - f) * math.tan(math.radians(a.lat)))
    u2 = math.atan((1.0 - f) * math.tan(math.radians(b.lat)))
    sin_u1, cos_u1 = math.sin(u1), math.cos(u1)
    sin_u2, cos_u2 = math.sin(u2), math.cos(u2)

    lam = L
    for _ in range(VINCENTY_MAX_ITER):
        sin_lam, cos_lam = math.sin(lam), math.cos(lam)
        sin_sigma = math.sqrt(
            (cos_u2 * sin_lam) ** 2 + (cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam) ** 2
        )
        if sin_sigma == 0.0:
            return 0.0  # coincident points
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lam
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cos_u1 * cos_u2 * sin_lam / sin_sigma
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
        if cos_sq_alpha == 0.0:
            cos_2sm = 0.0  # equatorial line
        else:
            cos_2sm = cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha))
        lam_prev = lam
        lam = L + (1.0 - c) * f * sin_alpha * (
            sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm ** 2))
        )
        if abs(lam - lam_prev) < VINCENTY_TOL:
            break
    else:
        raise NonConvergence(f"vincenty failed to converge for {a} -> {b}")

    u_sq = cos_sq_alpha * (WGS84_A ** 2 - WGS84_B ** 2) / WGS84_B ** 2
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))
    delta_sigma = big_b * sin_sigma * (
        cos_2sm
        + big_b / 4.0 * (
            cos_sigma * (-1.0 + 2.0 * cos_2sm ** 2)
            - big_b / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma ** 2) * (-3.0 + 4.0 * cos_2sm ** 2)
        )
    )
    return WGS84_B * big_a * (sigma - delta_sigma)


def _distance_with_fallback(a: GeoPoint, b: GeoPoint) -> float:
    try:
        return vincenty_distance(a, b)
    except NonConvergence:
        return great_circle_distance(a, b)


def nearest_pixel(grid: PixelGrid, q: GeoPoint) -> tuple[int, int, float]:
    """Cell of `grid` closest to `q` by geodesic distance.

    Ties break to the smallest (row, col) lexicographically; non-convergent
    pairs fall back to the great-circle distance. Returns (row, col, meters).
    """
    best = (0, 0, math.inf)
    for row in range(grid.rows):
        for col in range(grid.cols):
            d = _distance_with_fallback(grid.point(row, col), q)
            if d < best[2]:
                best = (row, col, d)
    return best


def center_offset(w: int) -> int:
    """In-window position of the center cell along each axis.

    Odd w centers exactly; even w uses the upper-left cell of the middle
    2x2 block, so the convention is offset = (w - 1) // 2 for every w.
    """
    if w < 1:
        raise ValueError(f"window edge {w} below 1")
    return (w - 1) // 2


def extract_window(rows: int, cols: int, center: tuple[int, int], w: int) -> WindowIndex:
    """Index of the w x w window around `center` inside a rows x cols grid.

    The center cell sits at in-window position (center_offset(w),
    center_offset(w)); no padding is applied, so a window that would cross a
    grid edge raises OutOfBounds.
    """
    if w < 1:
        raise OutOfBounds(f"window edge {w} below 1")
    crow, ccol = center
    offset = center_offset(w)
    row_start = crow - offset
    col_start = ccol - offset
    if row_start < 0 or col_start < 0 or row_start + w > rows or col_start + w > cols:
        raise OutOfBounds(
            f"window w={w} at center ({crow},{ccol}) exceeds {rows}x{cols} grid"
        )
    return WindowIndex(row_start, col_start, w)
