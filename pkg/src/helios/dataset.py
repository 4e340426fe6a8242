"""Supervised sequence samples, day-disjoint folds, tolerance filtering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import FORMAT_VERSION
from .errors import CadenceMismatch, FormatViolation, NotEnoughDays, WindowTooSmall
from .geo import center_offset
from .sitecube import SiteCube

SAMPLES_MAGIC = b"HSMP"


class ChannelTriple(NamedTuple):
    """Reflectance of the three visible channels at one cell."""

    c01: float
    c02: float
    c03: float

    @classmethod
    def from_array(cls, arr) -> "ChannelTriple":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass
class SequenceSample:
    """T input frames at a fixed interval plus the next-step center triple."""

    site_id: str
    input: np.ndarray  # (T, w, w, 3) float32, NaN-free
    target: np.ndarray  # (3,) float32, NaN-free
    target_timestamp: int
    last_input_timestamp: int
    local_day: date


def local_calendar_day(ts: int, utc_offset_minutes: int) -> date:
    return datetime.fromtimestamp(
        int(ts) + utc_offset_minutes * 60, tz=timezone.utc
    ).date()


def build_sequences(
    cube: SiteCube,
    T: int,
    interval_seconds: int,
    daytime: tuple[int, int] = (9, 17),
) -> list[SequenceSample]:
    """One sample per timestamp t whose T-frame history and next frame exist.

    Eligibility: frames at t-(T-1)*D ... t and t+D are all present and NaN-free
    and every one of the T+1 timestamps falls inside the local daytime window.
    The target is the three-channel value at the window's center cell.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    w = cube.meta.window_edge
    if w < 1:
        raise WindowTooSmall(f"window edge {w}")
    if cube.meta.cadence_seconds != interval_seconds:
        raise CadenceMismatch(
            f"cube cadence {cube.meta.cadence_seconds}s, expected {interval_seconds}s"
        )
    co = center_offset(w)
    ts = cube.timestamps
    pos = {int(t): i for i, t in enumerate(ts)}
    from .sitecube import daytime_slice

    day_ok = np.zeros(ts.size, dtype=bool)
    day_ok[daytime_slice(ts, cube.meta.utc_offset_minutes, *daytime)] = True
    clean = ~np.isnan(cube.frames).any(axis=(1, 2, 3))

    out: list[SequenceSample] = []
    for i, t in enumerate(ts):
        t = int(t)
        needed = [t - k * interval_seconds for k in range(T - 1, 0, -1)] + [t, t + interval_seconds]
        idx = [pos.get(u) for u in needed]
        if any(j is None for j in idx):
            continue
        if not all(day_ok[j] and clean[j] for j in idx):
            continue
        hist = np.stack([cube.frames[j] for j in idx[:-1]])
        target = cube.frames[idx[-1]][co, co, :].copy()
        out.append(
            SequenceSample(
                site_id=cube.meta.site_id,
                input=hist,
                target=target,
                target_timestamp=t + interval_seconds,
                last_input_timestamp=t,
                local_day=local_calendar_day(
                    t + interval_seconds, cube.meta.utc_offset_minutes
                ),
            )
        )
    return out


@dataclass(frozen=True)
class FoldSets:
    train: frozenset[date]
    validation: frozenset[date]
    test: frozenset[date]


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    day_fold: dict[date, int]
    folds: tuple[FoldSets, ...]


def split_by_day(
    samples: Iterable[SequenceSample] | Iterable,
    fold_count: int,
    seed: int,
    validation_fraction: float = 0.1,
) -> FoldSplit:
    """Deal distinct site-local days into folds, round-robin after a seeded shuffle.

    Fold k tests on its own days; validation takes max(1, round(fraction *
    remaining)) of the non-test days in shuffled order, training gets the rest.
    """
    if fold_count < 2:
        raise ValueError(f"fold_count must be >= 2, got {fold_count}")
    days = sorted({s.local_day for s in samples})
    if len(days) < fold_count:
        raise NotEnoughDays(f"{len(days)} distinct days < {fold_count} folds")
    rng = np.random.default_rng(seed)
    shuffled = [days[i] for i in rng.permutation(len(days))]
    day_fold = {d: i % fold_count for i, d in enumerate(shuffled)}
    folds = []
    for k in range(fold_count):
        test = [d for d in shuffled if day_fold[d] == k]
        rest = [d for d in shuffled if day_fold[d] != k]
        n_val = max(1, int(round(validation_fraction * len(rest))))
        folds.append(
            FoldSets(
                train=frozenset(rest[n_val:]),
                validation=frozenset(rest[:n_val]),
                test=frozenset(test),
            )
        )
    return FoldSplit(fold_count, day_fold, tuple(folds))


def samples_for_days(samples, days) -> list:
    days = set(days)
    return [s for s in samples if s.local_day in days]


def tolerance_filter(values, delta: float) -> np.ndarray:
    """Indices i >= 1 whose change from the previous value is at least delta."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return np.array([], dtype=np.int64)
    keep = np.abs(v[:-1] - v[1:]) >= delta
    return np.nonzero(keep)[0] + 1


def pairwise_change_mask(
    prev, nxt, delta: float, relative_percent: bool = False
) -> np.ndarray:
    """Per-point tolerance predicate: |prev - nxt| >= delta.

    With relative_percent, delta is a percent of |prev| (solar convention).
    Applied to a contiguous series this equals tolerance_filter.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if relative_percent:
        return np.abs(prev - nxt) >= (delta / 100.0) * np.abs(prev)
    return np.abs(prev - nxt) >= delta


# -- optional sample cache -----------------------------------------------------


def write_samples(samples: list[SequenceSample], path: Path) -> None:
    if not samples:
        raise ValueError("refusing to cache an empty sample list")
    inputs = np.stack([s.input for s in samples]).astype("<f4")
    targets = np.stack([s.target for s in samples]).astype("<f4")
    header = {
        "format_version": FORMAT_VERSION,
        "shape": list(inputs.shape),
        "site_ids": [s.site_id for s in samples],
        "target_timestamps": [int(s.target_timestamp) for s in samples],
        "last_input_timestamps": [int(s.last_input_timestamp) for s in samples],
        "local_days": [s.local_day.isoformat() for s in samples],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SAMPLES_MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(inputs.tobytes())
        fh.write(targets.tobytes())


def read_samples(path: Path) -> list[SequenceSample]:
    raw = Path(path).read_bytes()
    if raw[:4] != SAMPLES_MAGIC:
        raise FormatViolation(f"bad magic {raw[:4]!r}")
    if raw[4] != FORMAT_VERSION:
        raise FormatViolation(f"unsupported sample cache version {raw[4]}")
    hlen = int.from_bytes(raw[5:9], "little")
    header = json.loads(raw[9 : 9 + hlen].decode("utf-8"))
    n, T, w, _, c = header["shape"]
    body = raw[9 + hlen :]
    in_bytes = n * T * w * w * c * 4
    expected = in_bytes + n * c * 4
    if len(body) != expected:
        raise FormatViolation(f"sample payload {len(body)} bytes, expected {expected}")
    inputs = np.frombuffer(body[:in_bytes], dtype="<f4").reshape(n, T, w, w, c)
    targets = np.frombuffer(body[in_bytes:], dtype="<f4").reshape(n, c)
    return [
        SequenceSample(
            site_id=header["site_ids"][i],
            input=inputs[i],
            target=targets[i],
            target_timestamp=header["target_timestamps"][i],
            last_input_timestamp=header["last_input_timestamps"][i],
            local_day=date.fromisoformat(header["local_days"][i]),
        )
        for i in range(n)
    ]
