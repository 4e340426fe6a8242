from datetime import date

import pytest

from goesfetch.errors import NetworkError
from goesfetch.fetch import FetchJob, Site, day_prefixes, list_remote

SITE = Site("alpha", 40.0, -105.0, -360)


def make_job(tmp_path, start=date(2021, 6, 1), end=date(2021, 6, 1)):
    return FetchJob(
        sites=[SITE],
        start_date=start,
        end_date=end,
        out_dir=tmp_path / "out",
        archive_root="https://example/bucket",
        cache_dir=tmp_path / "cache",
    )


def fake_archive_lister(hours=(18,), cadence_min=5):
    def lister(prefix: str):
        parts = prefix.rstrip("/").split("/")
        hour = int(parts[-1])
        if hour not in hours:
            return []
        keys = []
        for minute in range(0, 60, cadence_min):
            for ch in (1, 2, 3):
                keys.append(
                    f"{prefix}OR_ABI-L1b-RadC-M6C{ch:02d}_G16_"
                    f"s2021152{hour:02d}{minute:02d}000_e0_c0.nc"
                )
        return keys

    return lister


class TestListRemote:
    def test_one_hour_at_five_minutes_lists_36_objects(self, tmp_path):
        job = make_job(tmp_path)
        manifest = list_remote(job, lister=fake_archive_lister(), sleep=lambda s: None)
        assert len(manifest) == 36  # 12 scans/hour x 3 channels
        assert manifest == sorted(manifest)

    def test_empty_date_range(self, tmp_path):
        job = make_job(tmp_path, start=date(2021, 6, 2), end=date(2021, 6, 1))
        assert list_remote(job, lister=fake_archive_lister(), sleep=lambda s: None) == []

    def test_channel_filter(self, tmp_path):
        job = make_job(tmp_path)
        job.channels = ("C02",)
        manifest = list_remote(job, lister=fake_archive_lister(), sleep=lambda s: None)
        assert len(manifest) == 12
        assert all("C02" in key for key in manifest)

    def test_manifest_cache_reused(self, tmp_path):
        job = make_job(tmp_path)
        calls = []

        def counting(prefix):
            calls.append(prefix)
            return fake_archive_lister()(prefix)

        first = list_remote(job, lister=counting, sleep=lambda s: None)
        assert len(calls) == 24  # every hour prefix of the day

        def exploding(prefix):
            raise AssertionError("cache was not reused")

        second = list_remote(job, lister=exploding, sleep=lambda s: None)
        assert second == first

    def test_retry_then_success(self, tmp_path):
        job = make_job(tmp_path)
        attempts = {"n": 0}
        naps = []

        def flaky(prefix):
            attempts["n"] += 1
            if attempts["n"] <= 2:
                raise ConnectionError("transient")
            return fake_archive_lister()(prefix)

        manifest = list_remote(job, lister=flaky, sleep=naps.append)
        assert len(manifest) == 36
        assert len(naps) == 2  # backed off twice before succeeding

    def test_network_error_after_three_attempts(self, tmp_path):
        job = make_job(tmp_path)

        def dead(prefix):
            raise ConnectionError("down")

        with pytest.raises(NetworkError, match="3 attempts"):
            list_remote(job, lister=dead, sleep=lambda s: None)


def test_day_prefixes_cover_range(tmp_path):
    job = make_job(tmp_path, start=date(2021, 6, 1), end=date(2021, 6, 3))
    prefixes = day_prefixes(job)
    assert len(prefixes) == 3 * 24
    assert prefixes[0] == "ABI-L1b-RadC/2021/152/00/"
    assert prefixes[-1] == "ABI-L1b-RadC/2021/154/23/"
