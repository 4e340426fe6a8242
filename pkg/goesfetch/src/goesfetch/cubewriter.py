"""Site-cube directory writer (format_version 1).

This is the contract surface with the core toolkit: meta.json carries the
site and per-cell geolocation, frames.bin is "SCUB" + version byte + little
endian float32 [time][row][col][channel], timestamps.bin is little-endian
int64 epoch seconds. Invalid cubes are refused, never written.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import SITECUBE_FORMAT_VERSION
from .errors import FormatViolation

FRAMES_MAGIC = b"SCUB"


def validate_cube(meta: dict, timestamps: np.ndarray, frames: np.ndarray) -> list[str]:
    out = []
    w = int(meta["window_edge"])
    chans = len(meta["channel_ids"])
    if w < 1:
        out.append("window_edge below 1")
    if len(meta["lat_of"]) != w * w or len(meta["lon_of"]) != w * w:
        out.append("lat_of/lon_of must have window_edge^2 entries")
    if timestamps.ndim != 1 or (timestamps.size > 1 and np.any(np.diff(timestamps) <= 0)):
        out.append("timestamps not strictly increasing")
    if frames.shape != (timestamps.size, w, w, chans):
        out.append(f"frames shape {frames.shape} inconsistent")
        return out
    bad = ~np.isnan(frames) & ((frames < 0.0) | (frames > 1.0))
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        out.append(f"reflectance outside [0,1] at {idx}")
    return out


def write_cube_dir(
    out_dir: Path,
    meta: dict,
    timestamps: np.ndarray,
    frames: np.ndarray,
) -> None:
    timestamps = np.asarray(timestamps, dtype=np.int64)
    frames = np.asarray(frames, dtype=np.float32)
    problems = validate_cube(meta, timestamps, frames)
    if problems:
        raise FormatViolation("; ".join(problems))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = dict(meta)
    doc["format_version"] = SITECUBE_FORMAT_VERSION
    (out_dir / "meta.json").write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    with open(out_dir / "frames.bin", "wb") as fh:
        fh.write(FRAMES_MAGIC)
        fh.write(bytes([SITECUBE_FORMAT_VERSION]))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())
    with open(out_dir / "timestamps.bin", "wb") as fh:
        fh.write(np.ascontiguousarray(timestamps, dtype="<i8").tobytes())
