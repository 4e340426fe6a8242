"""Synthetic cloud-advection scenes with known dynamics.

Gaussian-profile cloud blobs drift across a toroidal field at a per-day
velocity (mean + seeded jitter); reflectance rises toward 1 under cloud,
solar power falls with cloud opacity, a diurnal curve, and temperature
derating. The noiseless dynamics are exposed as an exact oracle so model
errors can be compared against the observation-noise floor.

Axes: velocity[0] moves columns (x), velocity[1] moves rows (y).
"""

from __future__ import annotations

import calendar
import json
import math
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import MarginTooSmall
from .geo import GeoPoint, PixelGrid, center_offset, extract_window
from .sitecube import ScalarSeries, SiteCube, SiteMeta, write_sitecube


@dataclass(frozen=True)
class SceneSpec:
    grid_edge: int = 52
    window: int = 10
    cadence_seconds: int = 900
    day_start_hour: int = 9
    day_end_hour: int = 17  # exclusive
    blob_count: int = 6
    blob_radius: tuple[float, float] = (2.0, 4.0)
    blob_opacity: tuple[float, float] = (0.35, 0.95)
    velocity: tuple[float, float] = (3.0, 0.0)  # (cols, rows) per step
    velocity_jitter: float = 0.5  # per-day sigma on each component
    margin_steps: int = 4
    clear_sky: float = 0.08  # channel-1 cloud-free reflectance
    channel_affine: tuple[tuple[float, float], tuple[float, float]] = (
        (0.9, 0.05),  # c02 = 0.9 * c01 + 0.05
        (0.8, 0.12),  # c03 = 0.8 * c01 + 0.12
    )
    capacity_kw: float = 10.0
    derate_per_degc: float = 0.004
    noise_sigma: float = 0.005
    power_noise_sigma: float = 0.05
    temperature_noise_sigma: float = 0.2
    utc_offset_minutes: int = -300
    start_date: str = "2021-06-01"
    base_lat: float = 33.0
    base_lon: float = -112.0
    seed: int = 7

    def steps_per_day(self) -> int:
        return (self.day_end_hour - self.day_start_hour) * 3600 // self.cadence_seconds

    def check_margin(self) -> None:
        margin = (self.grid_edge - self.window) // 2
        speed = math.hypot(*self.velocity) + 4.0 * self.velocity_jitter
        needed = math.ceil(speed * self.margin_steps)
        if self.grid_edge < self.window or margin < needed:
            raise MarginTooSmall(
                f"grid {self.grid_edge} leaves margin {margin} < {needed} "
                f"(speed {speed:.2f} cells/step over {self.margin_steps} steps)"
            )


@dataclass
class SceneState:
    site_index: int
    day_index: int
    step_index: int
    centers: np.ndarray  # (k, 2) blob centers, (col, row) in grid cells
    radii: np.ndarray
    opacities: np.ndarray
    velocity: np.ndarray  # (2,) cells per step for this day


def initial_state(spec: SceneSpec, site_index: int, day_index: int) -> SceneState:
    """Seeded blob layout and velocity for one (site, day) episode."""
    rng = np.random.default_rng([spec.seed, site_index, day_index])
    k = spec.blob_count
    centers = rng.uniform(0.0, spec.grid_edge, size=(k, 2))
    radii = rng.uniform(*spec.blob_radius, size=k)
    opacities = rng.uniform(*spec.blob_opacity, size=k)
    velocity = np.asarray(spec.velocity, dtype=np.float64) + rng.normal(
        0.0, spec.velocity_jitter, size=2
    )
    return SceneState(site_index, day_index, 0, centers, radii, opacities, velocity)


def _opacity_at(spec: SceneSpec, state: SceneState, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Combined cloud opacity at cell coordinates, toroidal distances."""
    L = float(spec.grid_edge)
    transmission = np.ones(cols.shape, dtype=np.float64)
    for (cx, cy), r, o in zip(state.centers, state.radii, state.opacities):
        dx = np.mod(cols - cx + L / 2.0, L) - L / 2.0
        dy = np.mod(rows - cy + L / 2.0, L) - L / 2.0
        profile = np.exp(-(dx * dx + dy * dy) / (2.0 * r * r))
        transmission *= 1.0 - o * profile
    return 1.0 - transmission


def _window_cells(spec: SceneSpec):
    g, w = spec.grid_edge, spec.window
    center = ((g - 1) // 2, (g - 1) // 2)
    win = extract_window(g, g, center, w)
    rows, cols = np.meshgrid(
        np.arange(win.row_start, win.row_start + w),
        np.arange(win.col_start, win.col_start + w),
        indexing="ij",
    )
    return cols.astype(np.float64), rows.astype(np.float64)


def _local_hour(spec: SceneSpec, step_index: int) -> float:
    return spec.day_start_hour + step_index * spec.cadence_seconds / 3600.0


def _diurnal(hour: float) -> float:
    return max(0.0, math.sin(math.pi * (hour - 6.0) / 12.0))


def clean_temperature(spec: SceneSpec, step_index: int) -> float:
    hour = _local_hour(spec, step_index)
    return 18.0 + 10.0 * math.sin(math.pi * (hour - 8.0) / 12.0)


def state_frame(spec: SceneSpec, state: SceneState):
    """Noiseless (frame, power_kw, temperature_c) at the state's step."""
    cols, rows = _window_cells(spec)
    opacity = _opacity_at(spec, state, cols, rows)
    c1 = spec.clear_sky + (1.0 - spec.clear_sky) * opacity
    frame = np.empty((spec.window, spec.window, 3), dtype=np.float64)
    frame[:, :, 0] = c1
    for ch, (a, b) in enumerate(spec.channel_affine, start=1):
        frame[:, :, ch] = a * c1 + b
    np.clip(frame, 0.0, 1.0, out=frame)

    co = center_offset(spec.window)
    temp = clean_temperature(spec, state.step_index)
    hour = _local_hour(spec, state.step_index)
    derate = max(0.0, 1.0 - spec.derate_per_degc * max(0.0, temp - 25.0))
    power = spec.capacity_kw * _diurnal(hour) * (1.0 - opacity[co, co]) * derate
    return frame, max(0.0, power), temp


def advance(state: SceneState) -> SceneState:
    return SceneState(
        state.site_index,
        state.day_index,
        state.step_index + 1,
        state.centers + state.velocity[None, :],
        state.radii,
        state.opacities,
        state.velocity,
    )


def scene_oracle_next(spec: SceneSpec, state: SceneState):
    """Exact noiseless next step: (frame, power_kw, temperature_c, next_state)."""
    nxt = advance(state)
    frame, power, temp = state_frame(spec, nxt)
    return frame, power, temp, nxt


def noise_floor_mae(spec: SceneSpec) -> float:
    """Expected |observation noise| for a perfect one-step predictor.

    E|N(0, sigma)| = sigma * sqrt(2/pi); clamping to [0, 1] is ignored, which
    is negligible while the clean field stays several sigma inside the range.
    """
    return spec.noise_sigma * math.sqrt(2.0 / math.pi)


def site_location(spec: SceneSpec, site_index: int) -> GeoPoint:
    return GeoPoint(
        spec.base_lat + 2.1 * (site_index % 5),
        spec.base_lon + 5.3 * (site_index // 5),
    )


def _site_meta(spec: SceneSpec, site_index: int) -> SiteMeta:
    w = spec.window
    co = center_offset(w)
    loc = site_location(spec, site_index)
    lat = loc.lat + 0.009 * (np.repeat(np.arange(w), w) - co)
    lon = loc.lon + 0.009 * (np.tile(np.arange(w), w) - co)
    return SiteMeta(
        site_id=f"site{site_index:02d}",
        location=loc,
        utc_offset_minutes=spec.utc_offset_minutes,
        window_edge=w,
        grid=PixelGrid(w, w, lat, lon),
        cadence_seconds=spec.cadence_seconds,
    )


def _day_epoch(spec: SceneSpec, day_index: int) -> int:
    d = date.fromisoformat(spec.start_date)
    midnight_utc = calendar.timegm(d.timetuple()) + day_index * 86400
    return midnight_utc - spec.utc_offset_minutes * 60 + spec.day_start_hour * 3600


def generate_site(spec: SceneSpec, site_index: int, n_days: int):
    """(SiteCube, power, temperature) for one site; deterministic per seed."""
    spec.check_margin()
    steps = spec.steps_per_day()
    timestamps = []
    frames = []
    powers = []
    temps = []
    for day in range(n_days):
        state = initial_state(spec, site_index, day)
        noise = np.random.default_rng([spec.seed, site_index, day, 1])
        start = _day_epoch(spec, day)
        for step in range(steps):
            frame, power, temp = state_frame(spec, state)
            if spec.noise_sigma > 0:
                frame = frame + noise.normal(0.0, spec.noise_sigma, size=frame.shape)
                np.clip(frame, 0.0, 1.0, out=frame)
            if spec.power_noise_sigma > 0:
                power = max(0.0, power + noise.normal(0.0, spec.power_noise_sigma))
            if spec.temperature_noise_sigma > 0:
                temp = temp + noise.normal(0.0, spec.temperature_noise_sigma)
            timestamps.append(start + step * spec.cadence_seconds)
            frames.append(frame.astype(np.float32))
            powers.append(power)
            temps.append(temp)
            state = advance(state)

    ts = np.array(timestamps, dtype=np.int64)
    cube = SiteCube(_site_meta(spec, site_index), ts, np.stack(frames))
    power_series = ScalarSeries("power_kW", ts, np.array(powers))
    temp_series = ScalarSeries("temperature_C", ts, np.array(temps))
    return cube, power_series, temp_series


def generate_scene(spec: SceneSpec, n_days: int, n_sites: int):
    """All sites of a scene as (cube, power, temperature) triples."""
    return [generate_site(spec, i, n_days) for i in range(n_sites)]


def write_scene(spec: SceneSpec, n_days: int, n_sites: int, out_dir: Path) -> list[Path]:
    """Generate and persist site-cube directories plus scene.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"spec": asdict(spec), "n_days": n_days, "n_sites": n_sites}
    (out_dir / "scene.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    paths = []
    for i in range(n_sites):
        cube, power, temp = generate_site(spec, i, n_days)
        site_dir = out_dir / cube.meta.site_id
        write_sitecube(cube, site_dir, power=power, temperature=temp)
        paths.append(site_dir)
    return paths
