"""Per-site window time series: on-disk format, validation, resampling.

A site cube is a directory:

    meta.json        site metadata, format_version, per-cell lat/lon (row-major)
    frames.bin       magic "SCUB", u8 version, float32 LE [time][row][col][channel]
    timestamps.bin   int64 LE UTC epoch seconds
    power.csv        optional, header "timestamp_utc,value", RFC-3339 timestamps
    temperature.csv  optional, same layout

Reflectance values live in [0, 1]; missing observations are NaN. The float
payloads round-trip bitwise.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION
from .errors import CadenceMismatch, FormatViolation
from .geo import GeoPoint, PixelGrid

FRAMES_MAGIC = b"SCUB"
MAX_UTC_OFFSET_MINUTES = 14 * 60


@dataclass(frozen=True)
class SiteMeta:
    site_id: str
    location: GeoPoint
    utc_offset_minutes: int
    window_edge: int
    grid: PixelGrid
    channel_ids: tuple[str, ...] = ("C01", "C02", "C03")
    cadence_seconds: int = 900


@dataclass
class SiteCube:
    """Windowed channel frames plus timestamps for one site.

    frames has shape (time, window_edge, window_edge, channels), float32.
    Treat instances as immutable once constructed.
    """

    meta: SiteMeta
    timestamps: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.frames = np.asarray(self.frames, dtype=np.float32)

    def equals(self, other: "SiteCube") -> bool:
        """Bit-exact equality; NaNs compare equal via their bit patterns."""
        return (
            self.meta == other.meta
            and np.array_equal(self.timestamps, other.timestamps)
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )


@dataclass
class ScalarSeries:
    """A timestamped scalar series (power in kW or temperature in deg C)."""

    kind: str  # "power_kW" | "temperature_C"
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)


def validate(cube: SiteCube) -> list[str]:
    """All invariant violations in a deterministic order; empty means valid."""
    out: list[str] = []
    meta = cube.meta
    if len(meta.channel_ids) == 0:
        out.append("channel_ids is empty")
    if meta.window_edge < 1:
        out.append(f"window_edge {meta.window_edge} below 1")
    if abs(meta.utc_offset_minutes) > MAX_UTC_OFFSET_MINUTES:
        out.append(f"utc_offset_minutes {meta.utc_offset_minutes} outside +/-840")
    w = meta.window_edge
    if meta.grid.rows != w or meta.grid.cols != w:
        out.append(f"grid is {meta.grid.rows}x{meta.grid.cols}, expected {w}x{w}")
    ts = cube.timestamps
    if ts.ndim != 1:
        out.append("timestamps must be one-dimensional")
    elif ts.size > 1 and np.any(np.diff(ts) <= 0):
        i = int(np.argmax(np.diff(ts) <= 0))
        out.append(f"timestamps not strictly increasing at index {i + 1}")
    if cube.frames.ndim != 4:
        out.append(f"frames must be 4-d, got shape {cube.frames.shape}")
        return out
    t, rows, cols, chans = cube.frames.shape
    if t != ts.size:
        out.append(f"frame count {t} != timestamp count {ts.size}")
    if (rows, cols) != (w, w):
        out.append(f"frame grid {rows}x{cols}, expected {w}x{w}")
    if chans != len(meta.channel_ids):
        out.append(f"frame channels {chans}, expected {len(meta.channel_ids)}")
    bad = ~np.isnan(cube.frames) & ((cube.frames < 0.0) | (cube.frames > 1.0))
    if np.any(bad):
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        out.append(f"reflectance outside [0,1] at [time][row][col][channel]={idx}")
    return out


# -- directory IO -------------------------------------------------------------


def _meta_to_json(meta: SiteMeta) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "site_id": meta.site_id,
        "lat": meta.location.lat,
        "lon": meta.location.lon,
        "utc_offset_minutes": meta.utc_offset_minutes,
        "window_edge": meta.window_edge,
        "channel_ids": list(meta.channel_ids),
        "cadence_seconds": meta.cadence_seconds,
        "lat_of": [float(v) for v in meta.grid.lat_of],
        "lon_of": [float(v) for v in meta.grid.lon_of],
    }


def _meta_from_json(doc: dict) -> SiteMeta:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatViolation(f"unsupported format_version {version!r}")
    try:
        w = int(doc["window_edge"])
        grid = PixelGrid(w, w, np.asarray(doc["lat_of"]), np.asarray(doc["lon_of"]))
        return SiteMeta(
            site_id=str(doc["site_id"]),
            location=GeoPoint(float(doc["lat"]), float(doc["lon"])),
            utc_offset_minutes=int(doc["utc_offset_minutes"]),
            window_edge=w,
            grid=grid,
            channel_ids=tuple(doc["channel_ids"]),
            cadence_seconds=int(doc["cadence_seconds"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatViolation(f"bad meta.json: {exc}") from exc


def rfc3339(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(text: str) -> int:
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def write_scalar_csv(series: ScalarSeries, path: Path) -> None:
    lines = ["timestamp_utc,value"]
    for ts, v in zip(series.timestamps, series.values):
        lines.append(f"{rfc3339(ts)},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scalar_csv(path: Path, kind: str) -> ScalarSeries:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0].strip() != "timestamp_utc,value":
        raise FormatViolation(f"{path}: expected header 'timestamp_utc,value'")
    ts, vals = [], []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatViolation(f"{path}:{i}: expected two columns")
        try:
            ts.append(parse_rfc3339(parts[0]))
            vals.append(float(parts[1]))
        except ValueError as exc:
            raise FormatViolation(f"{path}:{i}: {exc}") from exc
    return ScalarSeries(kind, np.array(ts, dtype=np.int64), np.array(vals))


def write_sitecube(
    cube: SiteCube,
    path: Path,
    power: ScalarSeries | None = None,
    temperature: ScalarSeries | None = None,
) -> None:
    violations = validate(cube)
    if violations:
        raise FormatViolation("; ".join(violations))
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.json").write_text(
        json.dumps(_meta_to_json(cube.meta), indent=1, sort_keys=True), encoding="utf-8"
    )
    with open(path / "frames.bin", "wb") as fh:
        fh.write(FRAMES_MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(np.ascontiguousarray(cube.frames, dtype="<f4").tobytes())
    with open(path / "timestamps.bin", "wb") as fh:
        fh.write(np.ascontiguousarray(cube.timestamps, dtype="<i8").tobytes())
    if power is not None:
        write_scalar_csv(power, path / "power.csv")
    if temperature is not None:
        write_scalar_csv(temperature, path / "temperature.csv")


def read_sitecube(path: Path) -> SiteCube:
    path = Path(path)
    meta = _meta_from_json(json.loads((path / "meta.json").read_text(encoding="utf-8")))

    raw = (path / "timestamps.bin").read_bytes()
    if len(raw) % 8 != 0:
        raise FormatViolation("timestamps.bin length not a multiple of 8")
    timestamps = np.frombuffer(raw, dtype="<i8")

    blob = (path / "frames.bin").read_bytes()
    if blob[:4] != FRAMES_MAGIC:
        raise FormatViolation(f"frames.bin bad magic {blob[:4]!r}")
    if len(blob) < 5 or blob[4] != FORMAT_VERSION:
        raise FormatViolation("frames.bin unsupported version")
    w, c = meta.window_edge, len(meta.channel_ids)
    expected = timestamps.size * w * w * c * 4
    payload = blob[5:]
    if len(payload) != expected:
        raise FormatViolation(
            f"frames.bin payload {len(payload)} bytes, expected {expected}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(timestamps.size, w, w, c)

    cube = SiteCube(meta, timestamps, frames)
    violations = validate(cube)
    if violations:
        raise FormatViolation("; ".join(violations))
    return cube


def read_site_power(path: Path) -> ScalarSeries:
    return read_scalar_csv(Path(path) / "power.csv", "power_kW")


def read_site_temperature(path: Path) -> ScalarSeries:
    return read_scalar_csv(Path(path) / "temperature.csv", "temperature_C")


# -- resampling and daytime filtering -----------------------------------------


def _bucket_starts(timestamps: np.ndarray, target_seconds: int) -> np.ndarray:
    return (timestamps // target_seconds) * target_seconds


def resample_mean(cube: SiteCube, target_seconds: int) -> SiteCube:
    """Average frames into UTC-aligned buckets of target_seconds.

    Cells average over non-missing inputs only; a cell missing in every input
    frame of a bucket stays NaN, and buckets with no input frames are omitted.
    """
    cadence = cube.meta.cadence_seconds
    if target_seconds <= 0 or target_seconds % cadence != 0:
        raise CadenceMismatch(f"target {target_seconds}s not a multiple of {cadence}s")
    starts = _bucket_starts(cube.timestamps, target_seconds)
    uniq, inverse = np.unique(starts, return_inverse=True)
    out = np.empty((uniq.size,) + cube.frames.shape[1:], dtype=np.float32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN cells stay NaN
        for i in range(uniq.size):
            group = cube.frames[inverse == i]
            out[i] = np.nanmean(group.astype(np.float64), axis=0).astype(np.float32)
    meta = replace(cube.meta, cadence_seconds=target_seconds)
    return SiteCube(meta, uniq, out)


def resample_scalar_mean(series: ScalarSeries, target_seconds: int) -> ScalarSeries:
    """Average a scalar series into the same UTC-aligned buckets as the frames."""
    if target_seconds <= 0:
        raise CadenceMismatch(f"target {target_seconds}s must be positive")
    starts = _bucket_starts(series.timestamps, target_seconds)
    uniq, inverse = np.unique(starts, return_inverse=True)
    sums = np.zeros(uniq.size)
    counts = np.zeros(uniq.size)
    finite = np.isfinite(series.values)
    np.add.at(sums, inverse[finite], series.values[finite])
    np.add.at(counts, inverse[finite], 1.0)
    keep = counts > 0
    return ScalarSeries(series.kind, uniq[keep], sums[keep] / counts[keep])


def daytime_slice(
    timestamps: np.ndarray, utc_offset_minutes: int, start_hour: int, end_hour: int
) -> np.ndarray:
    """Indices whose local clock hour lies in [start_hour, end_hour).

    Local clock is UTC plus a fixed minute offset; no daylight-saving rules.
    """
    if not 0 <= start_hour < end_hour <= 24:
        raise ValueError(f"bad daytime window [{start_hour}, {end_hour})")
    local = np.asarray(timestamps, dtype=np.int64) + utc_offset_minutes * 60
    hour = (local % 86400) // 3600
    return np.nonzero((hour >= start_hour) & (hour < end_hour))[0]
