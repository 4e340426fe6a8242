"""Error metrics, forecast skill, and tolerance-bucketed reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import pairwise_change_mask
from .errors import EmptyAfterFloor, EmptyInput, LengthMismatch, ZeroBaseline

CSV_HEADER = "scope,model,period,delta,n,kept_frac,mae,mape,skill"


def mae(actual, predicted) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise LengthMismatch(f"{actual.shape} vs {predicted.shape}")
    if actual.size == 0:
        raise EmptyInput("mae of zero points")
    return float(np.abs(actual - predicted).mean())


def mape(actual, predicted, floor: float = 0.0) -> float:
    """Mean absolute percentage error over points with |actual| >= floor."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise LengthMismatch(f"{actual.shape} vs {predicted.shape}")
    if actual.size == 0:
        raise EmptyInput("mape of zero points")
    if floor < 0:
        raise ValueError(f"floor must be >= 0, got {floor}")
    keep = np.abs(actual) >= floor if floor > 0 else np.abs(actual) > 0
    if not keep.any():
        raise EmptyAfterFloor(f"all {actual.size} points below floor {floor}")
    a, p = actual[keep], predicted[keep]
    return float((np.abs(a - p) / np.abs(a)).mean() * 100.0)


def skill_score(e_prediction: float, e_baseline: float) -> float:
    """(1 - E_prediction / E_baseline) * 100; positive beats the baseline."""
    if e_baseline <= 0.0:
        raise ZeroBaseline(f"baseline error {e_baseline}")
    return (1.0 - e_prediction / e_baseline) * 100.0


def _guarded_skill(e_model: float, e_base: float) -> float:
    """Report-level skill: static scenes can have a zero-error baseline."""
    if e_base > 0.0:
        return skill_score(e_model, e_base)
    return 0.0 if e_model == 0.0 else -math.inf


@dataclass(frozen=True)
class ReportRow:
    scope: str  # site_id or "ALL"
    model: str
    period: str
    delta: float
    n: int
    kept_frac: float
    mae: float
    mape: float
    skill: float


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path: Path) -> None:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.scope},{r.model},{r.period},{r.delta!r},{r.n},"
                f"{r.kept_frac!r},{r.mae!r},{r.mape!r},{r.skill!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: Path) -> "EvalReport":
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(f"unexpected report header in {path}")
        rows = []
        for line in lines[1:]:
            scope, model, period, delta, n, kept, m, mp, sk = line.split(",")
            rows.append(
                ReportRow(scope, model, period, float(delta), int(n),
                          float(kept), float(m), float(mp), float(sk))
            )
        return cls(rows)

    def select(self, **fields) -> list[ReportRow]:
        out = self.rows
        for name, value in fields.items():
            out = [r for r in out if getattr(r, name) == value]
        return out

    def value(self, metric: str, **fields) -> float:
        matches = self.select(**fields)
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} rows match {fields}")
        return getattr(matches[0], metric)


def tolerance_report(
    site_ids,
    prev,
    actual,
    predictions: dict[str, np.ndarray],
    deltas,
    *,
    period: str = "full",
    relative_percent: bool = False,
    baseline: str = "persistence",
    skill_metric: str = "mae",
    mape_floor_fraction: float = 0.01,
) -> EvalReport:
    """Per-site and pooled MAE/MAPE/skill for each tolerance bucket.

    A point predicting value v with predecessor u is kept at tolerance d iff
    |u - v| >= d (>= d percent of |u| when relative_percent). Bucket index
    sets are shared by construction across models; the baseline model's error
    anchors the skill column. "ALL" rows are the n-weighted mean of the
    per-site rows.
    """
    site_ids = np.asarray(site_ids)
    prev = np.asarray(prev, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if baseline not in predictions:
        raise ValueError(f"baseline {baseline!r} missing from predictions")
    for name, p in predictions.items():
        if np.asarray(p).shape != actual.shape:
            raise LengthMismatch(f"predictions[{name!r}] shape {np.asarray(p).shape}")
    if skill_metric not in ("mae", "mape"):
        raise ValueError(f"bad skill_metric {skill_metric!r}")

    model_names = list(predictions)
    sites = sorted(set(site_ids.tolist()))
    report = EvalReport(metadata={
        "period": period,
        "skill_metric": skill_metric,
        "tolerance_mode": "percent_of_previous" if relative_percent else "absolute",
    })

    # per-site floors for MAPE's low-denominator guard
    floors = {}
    for site in sites:
        a = actual[site_ids == site]
        floors[site] = mape_floor_fraction * float(np.abs(a).mean())

    per_site_rows: dict[tuple[str, float], dict[str, ReportRow]] = {}
    for site in sites:
        at_site = site_ids == site
        for delta in deltas:
            kept = at_site & pairwise_change_mask(prev, actual, delta, relative_percent)
            n = int(kept.sum())
            if n == 0:
                continue
            kept_frac = n / int(at_site.sum())
            errors = {}
            for name in model_names:
                p = np.asarray(predictions[name], dtype=np.float64)
                row_mae = mae(actual[kept], p[kept])
                try:
                    row_mape = mape(actual[kept], p[kept], floor=floors[site])
                except EmptyAfterFloor:
                    row_mape = math.nan
                errors[name] = (row_mae, row_mape)
            base_err = errors[baseline][0 if skill_metric == "mae" else 1]
            bucket = {}
            for name in model_names:
                e = errors[name][0 if skill_metric == "mae" else 1]
                skill = _guarded_skill(e, base_err)
                bucket[name] = ReportRow(
                    site, name, period, float(delta), n, kept_frac,
                    errors[name][0], errors[name][1], skill,
                )
            per_site_rows[(site, float(delta))] = bucket

    rows: list[ReportRow] = []
    for site in sites:
        for delta in deltas:
            bucket = per_site_rows.get((site, float(delta)))
            if bucket:
                rows.extend(bucket[name] for name in model_names)

    # pooled rows: n-weighted means of the per-site values
    for delta in deltas:
        buckets = [per_site_rows[(s, float(delta))] for s in sites
                   if (s, float(delta)) in per_site_rows]
        if not buckets:
            continue
        total_eligible = sum(
            int((site_ids == s).sum()) for s in sites if (s, float(delta)) in per_site_rows
        )
        n_total = sum(b[model_names[0]].n for b in buckets)
        agg = {}
        for name in model_names:
            w = np.array([b[name].n for b in buckets], dtype=np.float64)
            maes = np.array([b[name].mae for b in buckets])
            mapes = np.array([b[name].mape for b in buckets])
            agg_mae = float((w * maes).sum() / w.sum())
            ok = ~np.isnan(mapes)
            agg_mape = float((w[ok] * mapes[ok]).sum() / w[ok].sum()) if ok.any() else math.nan
            agg[name] = (agg_mae, agg_mape)
        base_err = agg[baseline][0 if skill_metric == "mae" else 1]
        for name in model_names:
            e = agg[name][0 if skill_metric == "mae" else 1]
            rows.append(
                ReportRow("ALL", name, period, float(delta), n_total,
                          n_total / total_eligible, agg[name][0], agg[name][1],
                          _guarded_skill(e, base_err))
            )

    report.rows = rows
    return report
