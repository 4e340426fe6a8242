from datetime import date

import numpy as np
import pytest

from helios.dataset import (
    ChannelTriple,
    build_sequences,
    pairwise_change_mask,
    read_samples,
    samples_for_days,
    split_by_day,
    tolerance_filter,
    write_samples,
)
from helios.errors import NotEnoughDays
from helios.geo import GeoPoint, PixelGrid
from helios.sitecube import SiteCube, SiteMeta, parse_rfc3339


def make_cube(n_days=1, frames_per_day=6, w=4, interval=900, seed=0, nan_at=()):
    """Frames on consecutive days starting 09:00 local (offset -300)."""
    rng = np.random.default_rng(seed)
    ts = []
    day0 = parse_rfc3339("2021-06-01T14:00:00Z")  # 09:00 local
    for d in range(n_days):
        for i in range(frames_per_day):
            ts.append(day0 + d * 86400 + i * interval)
    ts = np.array(ts, dtype=np.int64)
    frames = rng.uniform(0.1, 0.9, size=(ts.size, w, w, 3)).astype(np.float32)
    for idx in nan_at:
        frames[idx] = np.nan
    lat = 40 + 0.01 * np.repeat(np.arange(w), w)
    lon = -105 + 0.01 * np.tile(np.arange(w), w)
    meta = SiteMeta(
        site_id="s0",
        location=GeoPoint(40, -105),
        utc_offset_minutes=-300,
        window_edge=w,
        grid=PixelGrid(w, w, lat, lon),
        cadence_seconds=interval,
    )
    return SiteCube(meta, ts, frames)


class TestBuildSequences:
    def test_six_frames_two_windows(self):
        # sliding 4-frame history + 1 target over 6 frames: t at index 3 and 4
        cube = make_cube(frames_per_day=6)
        samples = build_sequences(cube, T=4, interval_seconds=900)
        assert len(samples) == 2
        s = samples[-1]
        assert s.input.shape == (4, 4, 4, 3)
        assert s.target_timestamp == int(cube.timestamps[5])
        assert s.last_input_timestamp == int(cube.timestamps[4])

    def test_gap_blocks_spanning_samples(self):
        cube = make_cube(frames_per_day=8)
        keep = np.ones(8, dtype=bool)
        keep[4] = False  # remove one bucket
        cube2 = SiteCube(cube.meta, cube.timestamps[keep], cube.frames[keep])
        samples = build_sequences(cube2, T=2, interval_seconds=900)
        # eligible t: frames {t-1,t,t+1} contiguous -> t in {1,2,5} of remaining
        assert len(samples) == 3

    def test_nan_frame_skipped(self):
        cube = make_cube(frames_per_day=7, nan_at=(6,))
        samples = build_sequences(cube, T=4, interval_seconds=900)
        assert len(samples) == 2  # the sample targeting frame 6 is dropped
        clean = build_sequences(make_cube(frames_per_day=7), T=4, interval_seconds=900)
        assert len(clean) == 3

    def test_default_shape_matches_protocol(self):
        cube = make_cube(frames_per_day=7, w=10)
        samples = build_sequences(cube, T=4, interval_seconds=900)
        assert len(samples) == 3
        assert samples[0].input.shape == (4, 10, 10, 3)
        assert samples[0].target.shape == (3,)

    def test_target_is_center_cell(self):
        cube = make_cube(frames_per_day=6, w=4)
        samples = build_sequences(cube, T=4, interval_seconds=900)
        # center offset for w=4 is (4-1)//2 = 1
        assert np.array_equal(samples[-1].target, cube.frames[5][1, 1, :])
        assert np.array_equal(samples[0].target, cube.frames[4][1, 1, :])

    def test_daytime_window_respected(self):
        # frames run 09:00..16:45 local; T=4 means targets from 10:00 on
        cube = make_cube(frames_per_day=32)
        samples = build_sequences(cube, T=4, interval_seconds=900)
        assert len(samples) == 28

    def test_count_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for trial in range(5):
            n = int(rng.integers(6, 40))
            T = int(rng.integers(1, 5))
            nan_at = tuple(rng.choice(n, size=n // 6, replace=False))
            cube = make_cube(frames_per_day=n, nan_at=nan_at, seed=trial)
            got = len(build_sequences(cube, T=T, interval_seconds=900))
            pos = {int(t): i for i, t in enumerate(cube.timestamps)}
            ok = lambda i: not np.isnan(cube.frames[i]).any()
            expected = 0
            for t in cube.timestamps:
                t = int(t)
                need = [t - k * 900 for k in range(T - 1, -1, -1)] + [t + 900]
                idx = [pos.get(u) for u in need]
                local = [(u - 300 * 60) % 86400 // 3600 for u in need]
                if all(
                    j is not None and ok(j) and 9 <= h < 17
                    for j, h in zip(idx, local)
                ):
                    expected += 1
            assert got == expected


class TestSplitByDay:
    def make_samples(self, n_days):
        cube_samples = []
        for d in range(n_days):
            cube = make_cube(n_days=1, frames_per_day=6)
            s = build_sequences(cube, T=4, interval_seconds=900)[0]
            s.local_day = date(2021, 6, 1 + d)
            cube_samples.append(s)
        return cube_samples

    def test_ten_days_five_folds(self):
        samples = self.make_samples(10)
        split = split_by_day(samples, fold_count=5, seed=3)
        for fold in split.folds:
            assert len(fold.test) == 2
            assert len(fold.validation) == 1  # max(1, round(0.1 * 8))
            assert len(fold.train) == 7

    def test_deterministic(self):
        samples = self.make_samples(11)
        a = split_by_day(samples, fold_count=5, seed=9)
        b = split_by_day(samples, fold_count=5, seed=9)
        assert a == b
        c = split_by_day(samples, fold_count=5, seed=10)
        assert a != c

    def test_disjoint_and_exhaustive(self):
        samples = self.make_samples(23)
        split = split_by_day(samples, fold_count=5, seed=0)
        all_days = {s.local_day for s in samples}
        for fold in split.folds:
            assert fold.train | fold.validation | fold.test == all_days
            assert not fold.train & fold.test
            assert not fold.validation & (fold.train | fold.test)

    def test_not_enough_days(self):
        with pytest.raises(NotEnoughDays):
            split_by_day(self.make_samples(4), fold_count=5, seed=0)

    def test_no_test_day_in_training_samples(self):
        samples = self.make_samples(15)
        split = split_by_day(samples, fold_count=5, seed=1)
        for fold in split.folds:
            train_samples = samples_for_days(samples, fold.train)
            assert all(s.local_day not in fold.test for s in train_samples)


class TestToleranceFilter:
    def test_zero_delta_keeps_everything(self):
        vals = np.random.default_rng(0).uniform(0, 1, 50)
        assert tolerance_filter(vals, 0.0).tolist() == list(range(1, 50))

    def test_example(self):
        assert tolerance_filter([0.5, 0.5, 0.6], 0.05).tolist() == [2]

    def test_large_delta_empty(self):
        assert tolerance_filter([0.1, 0.2, 0.3], 0.5).tolist() == []

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(0, 1, 200)
        for _ in range(20):
            d1, d2 = sorted(rng.uniform(0, 0.5, 2))
            k1 = set(tolerance_filter(vals, d1).tolist())
            k2 = set(tolerance_filter(vals, d2).tolist())
            assert k2 <= k1

    def test_pairwise_mask_agrees_on_contiguous_series(self):
        rng = np.random.default_rng(8)
        vals = rng.uniform(0, 1, 100)
        for delta in (0.0, 0.01, 0.1, 0.3):
            kept = tolerance_filter(vals, delta)
            mask = pairwise_change_mask(vals[:-1], vals[1:], delta)
            assert np.array_equal(np.nonzero(mask)[0] + 1, kept)

    def test_relative_percent_mode(self):
        mask = pairwise_change_mask([100.0, 10.0], [104.0, 10.2], 5.0, relative_percent=True)
        assert mask.tolist() == [False, False]
        mask = pairwise_change_mask([100.0, 10.0], [106.0, 10.6], 5.0, relative_percent=True)
        assert mask.tolist() == [True, True]


class TestSampleCache:
    def test_round_trip(self, tmp_path):
        cube = make_cube(frames_per_day=10)
        samples = build_sequences(cube, T=3, interval_seconds=900)
        write_samples(samples, tmp_path / "samples.bin")
        back = read_samples(tmp_path / "samples.bin")
        assert len(back) == len(samples)
        for a, b in zip(samples, back):
            assert a.site_id == b.site_id
            assert a.local_day == b.local_day
            assert a.target_timestamp == b.target_timestamp
            assert a.input.tobytes() == b.input.tobytes()
            assert a.target.tobytes() == b.target.tobytes()


def test_channel_triple_from_array():
    t = ChannelTriple.from_array(np.array([0.1, 0.2, 0.3], dtype=np.float32))
    assert t.c01 == pytest.approx(0.1)
