"""Geostationary fixed-grid navigation for the ABI imager.

Implements the published scan-angle <-> geodetic conversion for a
geostationary perspective projection (GRS80-style ellipsoid constants come
from the file's goes_imager_projection variable). Points off the visible
disk map to NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeosProjection:
    longitude_origin_deg: float
    perspective_height_m: float  # above the ellipsoid surface
    semi_major_m: float
    semi_minor_m: float
    sweep: str = "x"

    @property
    def orbital_radius_m(self) -> float:
        return self.perspective_height_m + self.semi_major_m


def scan_to_latlon(proj: GeosProjection, x: np.ndarray, y: np.ndarray):
    """Geodetic (lat, lon) in degrees for scan-angle grids x (E/W), y (N/S)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r_eq, r_pol = proj.semi_major_m, proj.semi_minor_m
    H = proj.orbital_radius_m
    lam0 = np.radians(proj.longitude_origin_deg)

    sin_x, cos_x = np.sin(x), np.cos(x)
    sin_y, cos_y = np.sin(y), np.cos(y)

    a = sin_x ** 2 + cos_x ** 2 * (cos_y ** 2 + (r_eq ** 2 / r_pol ** 2) * sin_y ** 2)
    b = -2.0 * H * cos_x * cos_y
    c = H ** 2 - r_eq ** 2
    disc = b ** 2 - 4.0 * a * c
    with np.errstate(invalid="ignore"):
        r_s = (-b - np.sqrt(disc)) / (2.0 * a)
        s_x = r_s * cos_x * cos_y
        s_y = -r_s * sin_x
        s_z = r_s * cos_x * sin_y
        lat = np.arctan((r_eq ** 2 / r_pol ** 2) * s_z / np.sqrt((H - s_x) ** 2 + s_y ** 2))
        lon = lam0 - np.arctan(s_y / (H - s_x))
    off_disk = disc < 0.0
    lat = np.where(off_disk, np.nan, np.degrees(lat))
    lon = np.where(off_disk, np.nan, np.degrees(lon))
    # wrap into (-180, 180]
    lon = np.where(np.isnan(lon), lon, ((lon + 180.0) % 360.0) - 180.0)
    lon = np.where(lon == -180.0, 180.0, lon)
    return lat, lon


def latlon_to_scan(proj: GeosProjection, lat_deg, lon_deg):
    """Inverse navigation; NaN for points hidden from the satellite."""
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    r_eq, r_pol = proj.semi_major_m, proj.semi_minor_m
    H = proj.orbital_radius_m
    lam0 = np.radians(proj.longitude_origin_deg)
    e2 = (r_eq ** 2 - r_pol ** 2) / r_eq ** 2

    phi_c = np.arctan((r_pol ** 2 / r_eq ** 2) * np.tan(lat))
    r_c = r_pol / np.sqrt(1.0 - e2 * np.cos(phi_c) ** 2)
    s_x = H - r_c * np.cos(phi_c) * np.cos(lon - lam0)
    s_y = -r_c * np.cos(phi_c) * np.sin(lon - lam0)
    s_z = r_c * np.sin(phi_c)

    hidden = H * (H - s_x) < s_y ** 2 + (r_eq ** 2 / r_pol ** 2) * s_z ** 2
    with np.errstate(invalid="ignore"):
        norm = np.sqrt(s_x ** 2 + s_y ** 2 + s_z ** 2)
        y = np.arctan(s_z / s_x)
        x = np.arcsin(-s_y / norm)
    x = np.where(hidden, np.nan, x)
    y = np.where(hidden, np.nan, y)
    return x, y
