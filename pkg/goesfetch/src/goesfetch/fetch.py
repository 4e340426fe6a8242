"""Archive listing, window extraction, and site-cube conversion."""

from __future__ import annotations

import csv
import hashlib
import json
import re
import time
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .abifile import AbiFrame, read_abi_file
from .cubewriter import write_cube_dir
from .errors import CorruptFile, NetworkError, SiteOutsideCoverage
from .geodesy import nearest_pixel
from .projection import scan_to_latlon

CHANNEL_RE = re.compile(r"-M\dC(\d\d)_")
COVERAGE_LIMIT_M = 10_000.0  # nearest pixel farther than this means "not imaged"
PREFILTER_THRESHOLD = 10_000  # cells; larger grids get a coarse prefilter
PREFILTER_HALF = 20  # cells kept around the coarse nearest on each side


@dataclass(frozen=True)
class Site:
    site_id: str
    lat: float
    lon: float
    utc_offset_minutes: int


@dataclass
class FetchJob:
    sites: list[Site]
    start_date: date
    end_date: date  # inclusive
    out_dir: Path
    archive_root: str = "https://noaa-goes16.s3.amazonaws.com"
    cache_dir: Path = Path("goes_cache")
    product: str = "ABI-L1b-RadC"
    channels: tuple[str, ...] = ("C01", "C02", "C03")
    window: int = 10
    cadence_seconds: int = 300


def read_sites_csv(path: Path) -> list[Site]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"site_id", "lat", "lon", "utc_offset_minutes"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header site_id,lat,lon,utc_offset_minutes")
        return [
            Site(
                row["site_id"].strip(),
                float(row["lat"]),
                float(row["lon"]),
                int(row["utc_offset_minutes"]),
            )
            for row in reader
        ]


def _dates(job: FetchJob):
    d = job.start_date
    while d <= job.end_date:
        yield d
        d += timedelta(days=1)


def day_prefixes(job: FetchJob) -> list[str]:
    out = []
    for d in _dates(job):
        doy = d.timetuple().tm_yday
        for hour in range(24):
            out.append(f"{job.product}/{d.year}/{doy:03d}/{hour:02d}/")
    return out


def _retry(fn, arg, attempts: int = 3, sleep=time.sleep):
    last = None
    for k in range(attempts):
        try:
            return fn(arg)
        except Exception as exc:  # noqa: BLE001 - every transport error retries
            last = exc
            if k + 1 < attempts:
                sleep(0.1 * 2 ** k)
    raise NetworkError(f"listing failed after {attempts} attempts: {last}")


def http_lister(root: str):
    """List object keys under a prefix via the S3 REST API."""
    import requests
    from xml.etree import ElementTree

    def list_prefix(prefix: str) -> list[str]:
        keys, token = [], None
        while True:
            params = {"list-type": "2", "prefix": prefix}
            if token:
                params["continuation-token"] = token
            resp = requests.get(root, params=params, timeout=30)
            resp.raise_for_status()
            ns = "{http://s3.amazonaws.com/doc/2006-03-01/}"
            tree = ElementTree.fromstring(resp.content)
            keys.extend(el.text for el in tree.iter(f"{ns}Key"))
            token_el = tree.find(f"{ns}NextContinuationToken")
            if token_el is None:
                return keys
            token = token_el.text

    return list_prefix


def local_lister(root: str):
    base = Path(root)

    def list_prefix(prefix: str) -> list[str]:
        directory = base / prefix
        if not directory.is_dir():
            return []
        return [f"{prefix}{p.name}" for p in sorted(directory.iterdir()) if p.is_file()]

    return list_prefix


def _manifest_cache_path(job: FetchJob) -> Path:
    key = json.dumps(
        [job.archive_root, job.product, str(job.start_date), str(job.end_date), job.channels],
        sort_keys=True,
    )
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    return Path(job.cache_dir) / f"manifest_{digest}.json"


def list_remote(job: FetchJob, lister=None, sleep=time.sleep) -> list[str]:
    """Deterministic sorted manifest of archive keys covering the job.

    The manifest is cached under the cache dir and reused on reruns.
    """
    cache = _manifest_cache_path(job)
    if cache.exists():
        return json.loads(cache.read_text())
    if lister is None:
        if "://" in job.archive_root:
            lister = http_lister(job.archive_root)
        else:
            lister = local_lister(job.archive_root)
    wanted = {ch.removeprefix("C").zfill(2) for ch in job.channels}
    keys: set[str] = set()
    for prefix in day_prefixes(job):
        for key in _retry(lister, prefix, sleep=sleep):
            m = CHANNEL_RE.search(key)
            if m and m.group(1) in wanted:
                keys.add(key)
    manifest = sorted(keys)
    cache.parent.mkdir(parents=True, exist_ok=True)
    cache.write_text(json.dumps(manifest))
    return manifest


def download(job: FetchJob, manifest: list[str], fetcher=None) -> list[Path]:
    """Materialize manifest objects in the cache; local roots are direct paths."""
    if "://" not in job.archive_root:
        return [Path(job.archive_root) / key for key in manifest]
    import requests

    out = []
    for key in manifest:
        target = Path(job.cache_dir) / key
        if not target.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
            if fetcher is not None:
                target.write_bytes(fetcher(key))
            else:
                resp = requests.get(f"{job.archive_root}/{key}", timeout=120)
                resp.raise_for_status()
                target.write_bytes(resp.content)
        out.append(target)
    return out


@dataclass
class WindowSlab:
    frame: np.ndarray  # (w, w) reflectance
    lat_of: np.ndarray  # (w, w)
    lon_of: np.ndarray  # (w, w)
    nearest: tuple[int, int]
    t_epoch: int
    band: int


def extract_window(path: Path, site: Site, w: int) -> WindowSlab:
    """Locate the site's nearest pixel and slice a w x w window around it."""
    abi = read_abi_file(path)
    return extract_window_from_frame(abi, site, w)


def extract_window_from_frame(abi: AbiFrame, site: Site, w: int) -> WindowSlab:
    xg, yg = np.meshgrid(abi.x, abi.y)
    lat, lon = scan_to_latlon(abi.projection, xg, yg)

    if lat.size > PREFILTER_THRESHOLD:
        # coarse angular prefilter, then the exact geodesic rule on the slab
        with np.errstate(invalid="ignore"):
            rough = (lat - site.lat) ** 2 + (
                (lon - site.lon) * np.cos(np.radians(site.lat))
            ) ** 2
        rough = np.where(np.isnan(rough), np.inf, rough)
        r0, c0 = np.unravel_index(int(np.argmin(rough)), rough.shape)
        r_lo, c_lo = max(0, r0 - PREFILTER_HALF), max(0, c0 - PREFILTER_HALF)
        sub_lat = lat[r_lo : r0 + PREFILTER_HALF + 1, c_lo : c0 + PREFILTER_HALF + 1]
        sub_lon = lon[r_lo : r0 + PREFILTER_HALF + 1, c_lo : c0 + PREFILTER_HALF + 1]
        r, c, meters = nearest_pixel(sub_lat, sub_lon, site.lat, site.lon)
        r, c = r + r_lo, c + c_lo
    else:
        if np.isnan(lat).all():
            raise SiteOutsideCoverage(f"{site.site_id}: file images no valid pixels")
        r, c, meters = nearest_pixel(lat, lon, site.lat, site.lon)

    if not np.isfinite(meters) or meters > COVERAGE_LIMIT_M:
        raise SiteOutsideCoverage(
            f"{site.site_id}: nearest pixel {meters:.0f} m away at ({r},{c})"
        )

    offset = (w - 1) // 2  # center cell convention shared with the core toolkit
    r0, c0 = r - offset, c - offset
    rows, cols = lat.shape
    if r0 < 0 or c0 < 0 or r0 + w > rows or c0 + w > cols:
        raise SiteOutsideCoverage(
            f"{site.site_id}: window w={w} at ({r},{c}) exceeds the {rows}x{cols} slab"
        )
    sl = (slice(r0, r0 + w), slice(c0, c0 + w))
    return WindowSlab(
        frame=abi.reflectance[sl],
        lat_of=lat[sl],
        lon_of=lon[sl],
        nearest=(r, c),
        t_epoch=abi.t_epoch,
        band=abi.band,
    )


def convert(job: FetchJob, files: list[Path], log=print) -> list[Path]:
    """Write one site-cube directory per site from downloaded archive files.

    Corrupt files are skipped with a log line; a timestamp enters a cube only
    when every requested channel was extracted for it.
    """
    channel_index = {ch: i for i, ch in enumerate(job.channels)}
    per_site: dict[str, dict[int, dict[int, WindowSlab]]] = {s.site_id: {} for s in job.sites}
    grids: dict[str, WindowSlab] = {}

    for path in files:
        try:
            abi = read_abi_file(path)
        except CorruptFile as exc:
            log(f"skipping corrupt file: {exc}")
            continue
        band_name = f"C{abi.band:02d}"
        if band_name not in channel_index:
            continue
        for site in job.sites:
            try:
                slab = extract_window_from_frame(abi, site, job.window)
            except SiteOutsideCoverage as exc:
                log(f"skipping {path.name} for {site.site_id}: {exc}")
                continue
            bucket = (slab.t_epoch // job.cadence_seconds) * job.cadence_seconds
            per_site[site.site_id].setdefault(bucket, {})[channel_index[band_name]] = slab
            if channel_index[band_name] == 0:
                grids.setdefault(site.site_id, slab)

    out_paths = []
    for site in job.sites:
        buckets = per_site[site.site_id]
        complete = sorted(t for t, by_ch in buckets.items() if len(by_ch) == len(job.channels))
        if not complete or site.site_id not in grids:
            log(f"no complete frames for {site.site_id}")
            continue
        w = job.window
        frames = np.full((len(complete), w, w, len(job.channels)), np.nan, dtype=np.float32)
        for i, t in enumerate(complete):
            for ch, slab in buckets[t].items():
                frames[i, :, :, ch] = slab.frame.astype(np.float32)
        grid = grids[site.site_id]
        meta = {
            "site_id": site.site_id,
            "lat": site.lat,
            "lon": site.lon,
            "utc_offset_minutes": site.utc_offset_minutes,
            "window_edge": w,
            "channel_ids": list(job.channels),
            "cadence_seconds": job.cadence_seconds,
            "lat_of": [float(v) for v in grid.lat_of.ravel()],
            "lon_of": [float(v) for v in grid.lon_of.ravel()],
            "source_product": job.product,
        }
        site_dir = Path(job.out_dir) / site.site_id
        write_cube_dir(site_dir, meta, np.array(complete, dtype=np.int64), frames)
        out_paths.append(site_dir)
    return out_paths
