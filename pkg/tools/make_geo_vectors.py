#!/usr/bin/env python3
"""Regenerate conformance/geo_vectors.json from the core geo implementation.

The converter package carries its own geodesy code; these shared vectors pin
both implementations to identical distances and nearest-pixel tie-breaking.
"""

import json
import math
from pathlib import Path

import numpy as np

from helios.geo import GeoPoint, PixelGrid, nearest_pixel, vincenty_distance


def main() -> None:
    rng = np.random.default_rng(20210601)
    pairs = []
    for _ in range(100):
        a = GeoPoint(math.degrees(math.asin(rng.uniform(-1, 1))), rng.uniform(-180, 180))
        b = GeoPoint(math.degrees(math.asin(rng.uniform(-1, 1))), rng.uniform(-180, 180))
        try:
            meters = vincenty_distance(a, b)
        except Exception:
            continue
        pairs.append(
            {"lat1": a.lat, "lon1": a.lon, "lat2": b.lat, "lon2": b.lon, "meters": meters}
        )

    nearest = []
    for seed in range(12):
        g_rng = np.random.default_rng(seed)
        rows = int(g_rng.integers(2, 9))
        cols = int(g_rng.integers(2, 9))
        lat0 = g_rng.uniform(-55, 55)
        lon0 = g_rng.uniform(-170, 170)
        dl = g_rng.uniform(0.008, 0.02)
        lat = lat0 + dl * np.arange(rows)[:, None] + g_rng.normal(0, dl / 8, (rows, cols))
        lon = lon0 + dl * np.arange(cols)[None, :] + g_rng.normal(0, dl / 8, (rows, cols))
        grid = PixelGrid(rows, cols, lat.ravel(), lon.ravel())
        q = GeoPoint(
            float(lat.mean() + g_rng.normal(0, 0.02)),
            float(lon.mean() + g_rng.normal(0, 0.02)),
        )
        row, col, meters = nearest_pixel(grid, q)
        nearest.append(
            {
                "rows": rows,
                "cols": cols,
                "lat_of": [float(v) for v in grid.lat_of],
                "lon_of": [float(v) for v in grid.lon_of],
                "query_lat": q.lat,
                "query_lon": q.lon,
                "row": row,
                "col": col,
                "meters": meters,
            }
        )
    # a deliberate tie: query on the symmetry axis must pick (0, 0)
    nearest.append(
        {
            "rows": 1,
            "cols": 2,
            "lat_of": [0.0, 0.0],
            "lon_of": [0.0, 1.0],
            "query_lat": 0.3,
            "query_lon": 0.5,
            "row": 0,
            "col": 0,
            "meters": nearest_pixel(
                PixelGrid(1, 2, [0.0, 0.0], [0.0, 1.0]), GeoPoint(0.3, 0.5)
            )[2],
        }
    )

    out = Path(__file__).resolve().parent.parent / "conformance" / "geo_vectors.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps({"pairs": pairs, "nearest": nearest}, indent=1))
    print(f"wrote {out} ({len(pairs)} pairs, {len(nearest)} nearest cases)")


if __name__ == "__main__":
    main()
