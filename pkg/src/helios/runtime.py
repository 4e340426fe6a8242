"""Worker-thread budget shared by parallelizable fits."""

from __future__ import annotations

import os

THREADS_ENV = "HELIOS_THREADS"


def worker_threads() -> int:
    """Thread cap from HELIOS_THREADS; defaults to machine parallelism."""
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
