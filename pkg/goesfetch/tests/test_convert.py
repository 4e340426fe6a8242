import json
import shutil
from datetime import date

import numpy as np
import pytest

from conftest import FIXTURES
from goesfetch.abifile import read_abi_file
from goesfetch.errors import SiteOutsideCoverage
from goesfetch.fetch import (
    FetchJob,
    Site,
    convert,
    download,
    extract_window_from_frame,
    list_remote,
    read_sites_csv,
)

SITE = Site("alpha", 40.0, -105.0, -360)
ARCHIVE = FIXTURES / "archive"
EXPECTED = FIXTURES / "expected_site_alpha"


def make_job(tmp_path, archive=None) -> FetchJob:
    return FetchJob(
        sites=[SITE],
        start_date=date(2021, 6, 1),
        end_date=date(2021, 6, 1),
        out_dir=tmp_path / "out",
        archive_root=str(archive or ARCHIVE),
        cache_dir=tmp_path / "cache",
    )


@pytest.fixture()
def converted(tmp_path):
    job = make_job(tmp_path)
    paths = convert(job, download(job, list_remote(job)))
    assert len(paths) == 1
    return paths[0]


class TestConformance:
    def test_bytes_match_committed_expectation(self, converted):
        for name in ("frames.bin", "timestamps.bin", "meta.json"):
            assert (converted / name).read_bytes() == (EXPECTED / name).read_bytes(), name

    def test_primary_validate_accepts_output(self, converted):
        helios_sitecube = pytest.importorskip("helios.sitecube")
        cube = helios_sitecube.read_sitecube(converted)
        assert helios_sitecube.validate(cube) == []

    def test_primary_read_reproduces_payload_bitwise(self, converted):
        helios_sitecube = pytest.importorskip("helios.sitecube")
        cube = helios_sitecube.read_sitecube(converted)
        payload = (converted / "frames.bin").read_bytes()[5:]
        assert cube.frames.tobytes() == payload
        assert cube.timestamps.tolist() == [1622570400, 1622570700]

    def test_nearest_index_agrees_with_primary_geo(self):
        helios_geo = pytest.importorskip("helios.geo")
        day = ARCHIVE / "ABI-L1b-RadC" / "2021" / "152" / "18"
        abi = read_abi_file(sorted(day.iterdir())[0])
        slab = extract_window_from_frame(abi, SITE, 10)
        assert slab.nearest == (19, 20)

        # reconstruct the full-slab grid and ask the core implementation
        from goesfetch.projection import scan_to_latlon

        xg, yg = np.meshgrid(abi.x, abi.y)
        lat, lon = scan_to_latlon(abi.projection, xg, yg)
        grid = helios_geo.PixelGrid(lat.shape[0], lat.shape[1], lat.ravel(), lon.ravel())
        row, col, _ = helios_geo.nearest_pixel(grid, helios_geo.GeoPoint(SITE.lat, SITE.lon))
        assert (row, col) == slab.nearest


class TestValues:
    def test_reflectance_scaling_matches_plant(self, converted):
        # recompute the planted radiance pattern straight from the fixture recipe
        frames = np.frombuffer((converted / "frames.bin").read_bytes()[5:], dtype="<f4")
        frames = frames.reshape(2, 10, 10, 3)
        kappa = {0: 0.4, 1: 0.35, 2: 0.45}
        for step in range(2):
            for ch in range(3):
                rng = np.random.default_rng(100 * (ch + 1) + step)
                raw = rng.integers(100, 1000, size=(40, 40)).astype(np.float64)
                expected = np.clip(raw * 0.002 * kappa[ch], 0.0, 1.0)
                window = expected[15:25, 16:26].astype(np.float32)
                got = frames[step, :, :, ch]
                mask = ~np.isnan(got)
                assert np.array_equal(got[mask], window[mask])

    def test_planted_fill_becomes_nan(self, converted):
        frames = np.frombuffer((converted / "frames.bin").read_bytes()[5:], dtype="<f4")
        frames = frames.reshape(2, 10, 10, 3)
        assert np.isnan(frames[0, 2, 6, 0])  # raw cell (17, 22) relative to (15, 16)
        assert int(np.isnan(frames).sum()) == 1

    def test_meta_contents(self, converted):
        meta = json.loads((converted / "meta.json").read_text())
        assert meta["format_version"] == 1
        assert meta["channel_ids"] == ["C01", "C02", "C03"]
        assert meta["window_edge"] == 10
        assert meta["source_product"] == "ABI-L1b-RadC"
        assert len(meta["lat_of"]) == 100


class TestRobustness:
    def test_site_outside_coverage(self, tmp_path):
        job = make_job(tmp_path)
        job.sites = [Site("pacific", 0.0, 160.0, 600)]
        paths = convert(job, download(job, list_remote(job)), log=lambda m: None)
        assert paths == []

    def test_outside_coverage_raises_on_direct_extract(self):
        day = ARCHIVE / "ABI-L1b-RadC" / "2021" / "152" / "18"
        abi = read_abi_file(sorted(day.iterdir())[0])
        with pytest.raises(SiteOutsideCoverage):
            extract_window_from_frame(abi, Site("far", 40.0, -99.0, -360), 10)

    def test_corrupt_file_skipped(self, tmp_path):
        broken = tmp_path / "archive"
        shutil.copytree(ARCHIVE, broken)
        day = broken / "ABI-L1b-RadC" / "2021" / "152" / "18"
        victim = sorted(day.iterdir())[3]  # a t1 file; t0 stays complete
        victim.write_bytes(victim.read_bytes()[:100])
        logs = []
        job = make_job(tmp_path, archive=broken)
        paths = convert(job, download(job, list_remote(job)), log=logs.append)
        assert len(paths) == 1
        assert any("corrupt" in line for line in logs)
        ts = np.frombuffer((paths[0] / "timestamps.bin").read_bytes(), dtype="<i8")
        assert ts.tolist() == [1622570400]  # the damaged scan time is dropped


class TestCli:
    def test_end_to_end(self, tmp_path):
        sites = tmp_path / "sites.csv"
        sites.write_text("site_id,lat,lon,utc_offset_minutes\nalpha,40.0,-105.0,-360\n")
        from goesfetch.cli import main

        code = main([
            "--sites", str(sites),
            "--from", "2021-06-01",
            "--to", "2021-06-01",
            "--out", str(tmp_path / "cubes"),
            "--archive-root", str(ARCHIVE),
            "--cache", str(tmp_path / "cache"),
        ])
        assert code == 0
        assert (tmp_path / "cubes" / "alpha" / "frames.bin").read_bytes() == (
            EXPECTED / "frames.bin"
        ).read_bytes()

    def test_sites_csv_parsing(self, tmp_path):
        path = tmp_path / "sites.csv"
        path.write_text(
            "site_id,lat,lon,utc_offset_minutes\na,40.0,-105.0,-360\nb,33.4,-112.1,-420\n"
        )
        sites = read_sites_csv(path)
        assert [s.site_id for s in sites] == ["a", "b"]
        assert sites[1].utc_offset_minutes == -420

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "sites.csv"
        path.write_text("id,lat,lon\na,1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_sites_csv(path)
