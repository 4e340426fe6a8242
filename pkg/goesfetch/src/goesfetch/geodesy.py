"""Geodesic distance and nearest-pixel search.

Independent implementation of the conventions shared with the core toolkit
(WGS84 Vincenty inverse iterated to 1e-12, lexicographic nearest-pixel ties,
great-circle fallback); conformance is pinned by the vectors committed under
conformance/geo_vectors.json.
"""

from __future__ import annotations

import math

import numpy as np

A = 6378137.0
F = 1.0 / 298.257223563
B = A * (1.0 - F)
MEAN_RADIUS = 6371008.8


class NonConvergence(Exception):
    pass


def great_circle(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2 * MEAN_RADIUS * math.asin(min(1.0, math.sqrt(h)))


def vincenty(lat1, lon1, lat2, lon2) -> float:
    if lat1 == lat2 and lon1 == lon2:
        return 0.0
    if (lat2, lon2) < (lat1, lon1):
        lat1, lon1, lat2, lon2 = lat2, lon2, lat1, lon1

    L = math.radians(lon2 - lon1)
    u1 = math.atan((1 - F) * math.tan(math.radians(lat1)))
    u2 = math.atan((1 - F) * math.tan(math.radians(lat2)))
    su1, cu1 = math.sin(u1), math.cos(u1)
    su2, cu2 = math.sin(u2), math.cos(u2)

    lam = L
    for _ in range(200):
        sl, cl = math.sin(lam), math.cos(lam)
        sin_sigma = math.sqrt((cu2 * sl) ** 2 + (cu1 * su2 - su1 * cu2 * cl) ** 2)
        if sin_sigma == 0.0:
            return 0.0
        cos_sigma = su1 * su2 + cu1 * cu2 * cl
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cu1 * cu2 * sl / sin_sigma
        cos2_alpha = 1.0 - sin_alpha * sin_alpha
        cos_2sm = 0.0 if cos2_alpha == 0.0 else cos_sigma - 2 * su1 * su2 / cos2_alpha
        c = F / 16 * cos2_alpha * (4 + F * (4 - 3 * cos2_alpha))
        prev = lam
        lam = L + (1 - c) * F * sin_alpha * (
            sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1 + 2 * cos_2sm ** 2))
        )
        if abs(lam - prev) < 1e-12:
            break
    else:
        raise NonConvergence(f"({lat1},{lon1}) -> ({lat2},{lon2})")

    u_sq = cos2_alpha * (A ** 2 - B ** 2) / B ** 2
    big_a = 1 + u_sq / 16384 * (4096 + u_sq * (-768 + u_sq * (320 - 175 * u_sq)))
    big_b = u_sq / 1024 * (256 + u_sq * (-128 + u_sq * (74 - 47 * u_sq)))
    d_sigma = big_b * sin_sigma * (
        cos_2sm
        + big_b / 4 * (
            cos_sigma * (-1 + 2 * cos_2sm ** 2)
            - big_b / 6 * cos_2sm * (-3 + 4 * sin_sigma ** 2) * (-3 + 4 * cos_2sm ** 2)
        )
    )
    return B * big_a * (sigma - d_sigma)


def distance(lat1, lon1, lat2, lon2) -> float:
    try:
        return vincenty(lat1, lon1, lat2, lon2)
    except NonConvergence:
        return great_circle(lat1, lon1, lat2, lon2)


def nearest_pixel(lat_of: np.ndarray, lon_of: np.ndarray, lat: float, lon: float):
    """(row, col, meters) of the closest cell; ties break to the smallest
    (row, col) lexicographically."""
    rows, cols = lat_of.shape
    best = (0, 0, math.inf)
    for r in range(rows):
        for c in range(cols):
            if math.isnan(lat_of[r, c]) or math.isnan(lon_of[r, c]):
                continue
            d = distance(float(lat_of[r, c]), float(lon_of[r, c]), lat, lon)
            if d < best[2]:
                best = (r, c, d)
    return best
