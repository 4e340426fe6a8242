"""goes-fetch command line: archive listing, download, and conversion."""

from __future__ import annotations

import argparse
import sys
from datetime import date
from pathlib import Path

from .errors import GoesFetchError
from .fetch import FetchJob, convert, download, list_remote, read_sites_csv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goes-fetch",
        description="Extract per-site windows from GOES-16 ABI files into site-cube directories",
    )
    parser.add_argument("--sites", required=True, help="CSV: site_id,lat,lon,utc_offset_minutes")
    parser.add_argument("--from", dest="start", required=True, help="first date, YYYY-MM-DD")
    parser.add_argument("--to", dest="end", required=True, help="last date (inclusive)")
    parser.add_argument("--out", required=True, help="output directory for site cubes")
    parser.add_argument(
        "--archive-root",
        default="https://noaa-goes16.s3.amazonaws.com",
        help="bucket URL or a local directory laid out like the archive",
    )
    parser.add_argument("--cache", default="goes_cache", help="download/manifest cache dir")
    parser.add_argument("--product", default="ABI-L1b-RadC")
    parser.add_argument("--window", type=int, default=10)
    parser.add_argument("--cadence", type=int, default=300, help="native cadence, seconds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = FetchJob(
            sites=read_sites_csv(Path(args.sites)),
            start_date=date.fromisoformat(args.start),
            end_date=date.fromisoformat(args.end),
            out_dir=Path(args.out),
            archive_root=args.archive_root,
            cache_dir=Path(args.cache),
            product=args.product,
            window=args.window,
            cadence_seconds=args.cadence,
        )
        manifest = list_remote(job)
        print(f"{len(manifest)} archive objects in range")
        files = download(job, manifest)
        written = convert(job, files)
        for path in written:
            print(f"wrote {path}")
        return 0 if written else 2
    except (GoesFetchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
