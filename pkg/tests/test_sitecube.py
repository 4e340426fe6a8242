import numpy as np
import pytest

from helios.errors import CadenceMismatch, FormatViolation
from helios.geo import GeoPoint, PixelGrid
from helios.sitecube import (
    ScalarSeries,
    SiteCube,
    SiteMeta,
    daytime_slice,
    parse_rfc3339,
    read_scalar_csv,
    read_sitecube,
    resample_mean,
    resample_scalar_mean,
    rfc3339,
    validate,
    write_scalar_csv,
    write_sitecube,
)


def make_meta(w=3, cadence=300, site_id="s0"):
    lat0, lon0 = 40.0, -105.0
    lat = lat0 + 0.01 * np.repeat(np.arange(w), w)
    lon = lon0 + 0.01 * np.tile(np.arange(w), w)
    return SiteMeta(
        site_id=site_id,
        location=GeoPoint(lat0, lon0),
        utc_offset_minutes=-300,
        window_edge=w,
        grid=PixelGrid(w, w, lat, lon),
        cadence_seconds=cadence,
    )


def make_cube(n=2, w=3, cadence=300, seed=0, start=1_600_000_500):
    rng = np.random.default_rng(seed)
    start = (start // cadence) * cadence
    ts = start + cadence * np.arange(n)
    frames = rng.uniform(0, 1, size=(n, w, w, 3)).astype(np.float32)
    return SiteCube(make_meta(w, cadence), ts, frames)


class TestRoundTrip:
    def test_small_cube(self, tmp_path):
        cube = make_cube()
        write_sitecube(cube, tmp_path / "s0")
        back = read_sitecube(tmp_path / "s0")
        assert back.equals(cube)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_cubes_with_nans(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        w = int(rng.integers(1, 6))
        cube = make_cube(n=n, w=w, seed=seed)
        mask = rng.random(cube.frames.shape) < 0.2
        frames = cube.frames.copy()
        frames[mask] = np.nan
        cube = SiteCube(cube.meta, cube.timestamps, frames)
        write_sitecube(cube, tmp_path / "c")
        assert read_sitecube(tmp_path / "c").equals(cube)

    def test_scalar_csv_round_trip(self, tmp_path):
        series = ScalarSeries(
            "power_kW", [1_600_000_000, 1_600_000_900], [3.125, 0.30000000000000004]
        )
        write_scalar_csv(series, tmp_path / "power.csv")
        back = read_scalar_csv(tmp_path / "power.csv", "power_kW")
        assert np.array_equal(back.timestamps, series.timestamps)
        assert back.values.tobytes() == series.values.tobytes()

    def test_rfc3339(self):
        assert rfc3339(0) == "1970-01-01T00:00:00Z"
        assert parse_rfc3339("1970-01-01T00:00:00Z") == 0
        assert parse_rfc3339("2021-06-01T14:00:00+00:00") == parse_rfc3339(
            "2021-06-01T14:00:00Z"
        )


class TestCorruptFiles:
    def test_frame_count_mismatch(self, tmp_path):
        cube = make_cube(n=3)
        write_sitecube(cube, tmp_path / "c")
        blob = (tmp_path / "c" / "frames.bin").read_bytes()
        (tmp_path / "c" / "frames.bin").write_bytes(blob[:-4])
        with pytest.raises(FormatViolation, match="payload"):
            read_sitecube(tmp_path / "c")

    def test_bad_magic(self, tmp_path):
        write_sitecube(make_cube(), tmp_path / "c")
        blob = (tmp_path / "c" / "frames.bin").read_bytes()
        (tmp_path / "c" / "frames.bin").write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(FormatViolation, match="magic"):
            read_sitecube(tmp_path / "c")

    def test_out_of_range_reflectance_names_index(self, tmp_path):
        cube = make_cube()
        write_sitecube(cube, tmp_path / "c")
        frames = cube.frames.copy()
        frames[1, 2, 0, 1] = 1.5
        bad = SiteCube(cube.meta, cube.timestamps, frames)
        with pytest.raises(FormatViolation, match=r"\(1, 2, 0, 1\)"):
            write_sitecube(bad, tmp_path / "c2")

    def test_out_of_range_payload_rejected_on_read(self, tmp_path):
        cube = make_cube()
        write_sitecube(cube, tmp_path / "c")
        blob = bytearray((tmp_path / "c" / "frames.bin").read_bytes())
        blob[5:9] = np.float32(1.5).tobytes()  # first payload value out of range
        (tmp_path / "c" / "frames.bin").write_bytes(bytes(blob))
        with pytest.raises(FormatViolation, match=r"\(0, 0, 0, 0\)"):
            read_sitecube(tmp_path / "c")

    def test_bad_format_version(self, tmp_path):
        write_sitecube(make_cube(), tmp_path / "c")
        meta = (tmp_path / "c" / "meta.json").read_text()
        (tmp_path / "c" / "meta.json").write_text(meta.replace('"format_version": 1', '"format_version": 99'))
        with pytest.raises(FormatViolation, match="format_version"):
            read_sitecube(tmp_path / "c")


class TestValidate:
    def test_valid_cube(self):
        assert validate(make_cube()) == []

    def test_descending_timestamps(self):
        cube = make_cube(n=3)
        ts = cube.timestamps.copy()
        ts[2] = ts[0]
        bad = SiteCube(cube.meta, ts, cube.frames)
        msgs = validate(bad)
        assert len(msgs) == 1 and "increasing" in msgs[0]

    def test_nan_frames_are_valid(self):
        cube = make_cube()
        frames = cube.frames.copy()
        frames[0] = np.nan
        assert validate(SiteCube(cube.meta, cube.timestamps, frames)) == []

    def test_count_mismatch(self):
        cube = make_cube(n=3)
        bad = SiteCube(cube.meta, cube.timestamps[:2], cube.frames)
        assert any("frame count" in m for m in validate(bad))


class TestResample:
    def test_constant_frames(self):
        cube = make_cube(n=3, cadence=300)
        frames = np.full_like(cube.frames, 0.2)
        start = (cube.timestamps[0] // 900) * 900
        ts = start + 300 * np.arange(3)
        out = resample_mean(SiteCube(cube.meta, ts, frames), 900)
        assert out.timestamps.tolist() == [start]
        assert np.allclose(out.frames, 0.2)

    def test_mean_of_three(self):
        cube = make_cube(n=3, cadence=300)
        frames = cube.frames.copy()
        start = (cube.timestamps[0] // 900) * 900
        ts = start + 300 * np.arange(3)
        frames[:, 0, 0, 0] = [0.1, 0.2, 0.3]
        out = resample_mean(SiteCube(cube.meta, ts, frames), 900)
        assert out.frames[0, 0, 0, 0] == pytest.approx(0.2)

    def test_mean_skips_missing(self):
        cube = make_cube(n=3, cadence=300)
        frames = cube.frames.copy()
        start = (cube.timestamps[0] // 900) * 900
        ts = start + 300 * np.arange(3)
        frames[:, 0, 0, 0] = [0.1, np.nan, 0.3]
        frames[:, 1, 1, 2] = np.nan
        out = resample_mean(SiteCube(cube.meta, ts, frames), 900)
        assert out.frames[0, 0, 0, 0] == pytest.approx(0.2)
        assert np.isnan(out.frames[0, 1, 1, 2])

    def test_identity_when_target_equals_cadence(self):
        cube = make_cube(n=4, cadence=900)
        out = resample_mean(cube, 900)
        assert out.equals(cube)

    def test_idempotent(self):
        cube = make_cube(n=6, cadence=300)
        once = resample_mean(cube, 900)
        twice = resample_mean(once, 900)
        assert twice.equals(once)

    def test_cadence_mismatch(self):
        with pytest.raises(CadenceMismatch):
            resample_mean(make_cube(cadence=300), 450)

    def test_gap_buckets_omitted_and_range_kept(self):
        cube = make_cube(n=2, cadence=300)
        ts = np.array([0, 3600], dtype=np.int64)  # two buckets, a gap between
        out = resample_mean(SiteCube(cube.meta, ts, cube.frames), 900)
        assert out.timestamps.tolist() == [0, 3600]
        valid = ~np.isnan(out.frames)
        assert np.all(out.frames[valid] >= 0) and np.all(out.frames[valid] <= 1)

    @pytest.mark.parametrize("seed", range(5))
    def test_output_count_bounded_by_span(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        cube = make_cube(n=n, cadence=300, seed=seed)
        out = resample_mean(cube, 900)
        span = int(cube.timestamps[-1] - cube.timestamps[0]) + 300
        assert out.timestamps.size <= -(-span // 900) + 1
        valid = ~np.isnan(out.frames)
        assert np.all(out.frames[valid] >= 0) and np.all(out.frames[valid] <= 1)

    def test_scalar_resample(self):
        s = ScalarSeries("power_kW", [0, 300, 600, 900], [1.0, 2.0, 3.0, 10.0])
        out = resample_scalar_mean(s, 900)
        assert out.timestamps.tolist() == [0, 900]
        assert out.values.tolist() == [2.0, 10.0]


class TestDaytimeSlice:
    # offset -300 minutes puts local time 5 hours behind UTC
    def test_nine_am_local_kept(self):
        ts = [parse_rfc3339("2021-06-01T14:00:00Z")]  # 09:00 local
        assert daytime_slice(ts, -300, 9, 17).tolist() == [0]

    def test_five_pm_local_dropped(self):
        ts = [parse_rfc3339("2021-06-01T22:00:00Z")]  # 17:00 local
        assert daytime_slice(ts, -300, 9, 17).tolist() == []

    def test_solar_window(self):
        ts = [
            parse_rfc3339("2021-06-01T13:45:00Z"),  # 08:45 local
            parse_rfc3339("2021-06-01T14:00:00Z"),  # 09:00 local
            parse_rfc3339("2021-06-01T19:45:00Z"),  # 14:45 local
            parse_rfc3339("2021-06-01T20:00:00Z"),  # 15:00 local
        ]
        assert daytime_slice(ts, -300, 9, 15).tolist() == [1, 2]
