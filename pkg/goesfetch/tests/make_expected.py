#!/usr/bin/env python3
"""Freeze the expected conversion of the committed fixture archive."""

import shutil
import sys
import tempfile
from datetime import date
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from goesfetch.fetch import FetchJob, Site, convert, download, list_remote  # noqa: E402

HERE = Path(__file__).resolve().parent


def main():
    with tempfile.TemporaryDirectory() as tmp:
        job = FetchJob(
            sites=[Site("alpha", 40.0, -105.0, -360)],
            start_date=date(2021, 6, 1),
            end_date=date(2021, 6, 1),
            out_dir=Path(tmp) / "out",
            archive_root=str(HERE / "fixtures" / "archive"),
            cache_dir=Path(tmp) / "cache",
        )
        paths = convert(job, download(job, list_remote(job)))
        target = HERE / "fixtures" / "expected_site_alpha"
        if target.exists():
            shutil.rmtree(target)
        shutil.copytree(paths[0], target)
        print(f"froze {target}")


if __name__ == "__main__":
    main()
