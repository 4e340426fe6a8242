"""End-to-end solar nowcasting: P_next = f(P_now, channels_next, T_now).

The regressor f is trained per site on ground-truth next-step channels and
deployed with channel forecasts. Four predictors share every evaluation
point: persistence, f fed with forecast channels, f fed with current
channels (the upper bound), and f fed with ground-truth next channels (the
lower bound, infeasible in deployment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import local_calendar_day
from .errors import AlignmentError, EmptyTrainingSet, MissingHistory
from .geo import center_offset
from .metrics import EvalReport, tolerance_report
from .sitecube import ScalarSeries, SiteCube, daytime_slice
from .svr import SvrModel, SvrSpec, svr_fit

MODEL_PERSISTENCE = "persistence"
MODEL_CNNLSTM_SVR = "cnnlstm_svr"
MODEL_SVR_CURRENT = "svr_current"  # channels held at their current values
MODEL_SVR_TRUTH = "svr_truth"  # ground-truth future channels (not deployable)

FOUR_MODELS = (MODEL_PERSISTENCE, MODEL_CNNLSTM_SVR, MODEL_SVR_CURRENT, MODEL_SVR_TRUTH)


@dataclass
class NowcastSample:
    site_id: str
    t: int
    p_now: float
    temp_now: float
    c_now: np.ndarray  # (3,) center channels at t
    c_next: np.ndarray  # (3,) ground-truth center channels at t + interval
    p_next: float
    local_day: object
    history: np.ndarray | None  # (T, w, w, 3) frames ending at t, if available


class PersistenceChannels:
    """Channel forecaster that repeats the last observed center triple."""

    def predict_history(self, history: np.ndarray) -> np.ndarray:
        co = center_offset(history.shape[1])
        return np.asarray(history[-1, co, co, :])


class TruthChannels:
    """Oracle forecaster used to realize the error lower bound."""

    def __init__(self, lookup: dict):
        self._lookup = lookup  # (site_id, t) -> c_next

    def predict_history(self, history: np.ndarray, key=None) -> np.ndarray:
        return self._lookup[key]


def build_nowcast_features(
    cube: SiteCube,
    power: ScalarSeries,
    temperature: ScalarSeries,
    interval_seconds: int,
    steps: int = 4,
    solar_daytime: tuple[int, int] = (9, 15),
) -> list[NowcastSample]:
    """One sample per t with aligned power, temperature, and channel data.

    Requires t and t+interval inside the local solar window and finite
    P_t, T_t, P_next and center channels; the frame history ending at t is
    attached when its `steps` frames all exist and are NaN-free.
    """
    if cube.meta.cadence_seconds != interval_seconds:
        raise AlignmentError(
            f"cube cadence {cube.meta.cadence_seconds}s != interval {interval_seconds}s"
        )
    for series in (power, temperature):
        off_grid = np.nonzero(series.timestamps % interval_seconds)[0]
        if off_grid.size:
            raise AlignmentError(
                f"{series.kind} timestamp {int(series.timestamps[off_grid[0]])} "
                f"not aligned to {interval_seconds}s buckets"
            )

    w = cube.meta.window_edge
    co = center_offset(w)
    pos = {int(t): i for i, t in enumerate(cube.timestamps)}
    power_at = dict(zip(power.timestamps.tolist(), power.values.tolist()))
    temp_at = dict(zip(temperature.timestamps.tolist(), temperature.values.tolist()))

    solar_ok = set(
        cube.timestamps[
            daytime_slice(cube.timestamps, cube.meta.utc_offset_minutes, *solar_daytime)
        ].tolist()
    )
    clean = ~np.isnan(cube.frames).any(axis=(1, 2, 3))

    out: list[NowcastSample] = []
    for t in cube.timestamps.tolist():
        t_next = t + interval_seconds
        if t not in solar_ok or t_next not in solar_ok:
            continue
        i, j = pos.get(t), pos.get(t_next)
        if i is None or j is None:
            continue
        p_now, temp_now = power_at.get(t), temp_at.get(t)
        p_next = power_at.get(t_next)
        if p_now is None or temp_now is None or p_next is None:
            continue
        c_now = cube.frames[i][co, co, :]
        c_next = cube.frames[j][co, co, :]
        values = (p_now, temp_now, p_next, *c_now.tolist(), *c_next.tolist())
        if not all(np.isfinite(values)):
            continue

        hist_idx = [pos.get(t - k * interval_seconds) for k in range(steps - 1, -1, -1)]
        history = None
        if all(h is not None and clean[h] for h in hist_idx):
            history = np.stack([cube.frames[h] for h in hist_idx])

        out.append(
            NowcastSample(
                site_id=cube.meta.site_id,
                t=t,
                p_now=float(p_now),
                temp_now=float(temp_now),
                c_now=np.asarray(c_now, dtype=np.float64),
                c_next=np.asarray(c_next, dtype=np.float64),
                p_next=float(p_next),
                local_day=local_calendar_day(t_next, cube.meta.utc_offset_minutes),
                history=history,
            )
        )
    return out


def feature_vector(p_now: float, channels, temp_now: float) -> np.ndarray:
    """The fixed regressor layout: (P_t, c01, c02, c03, T_t)."""
    c = np.asarray(channels, dtype=np.float64)
    return np.array([p_now, c[0], c[1], c[2], temp_now], dtype=np.float64)


def train_nowcaster(samples: list[NowcastSample], spec: SvrSpec = SvrSpec()) -> SvrModel:
    """Fit f on ground-truth next-step channels for one site."""
    if not samples:
        raise EmptyTrainingSet("no nowcast samples")
    X = np.stack([feature_vector(s.p_now, s.c_next, s.temp_now) for s in samples])
    y = np.array([s.p_next for s in samples])
    return svr_fit(X, y, spec)


def forecast_step(model: SvrModel, channel_model, sample: NowcastSample) -> float:
    """f(P_t, forecast channels, T_t), clamped at 0 kW.

    channel_model must provide predict_history(history) (TruthChannels also
    accepts the sample key); the trained channel model stays frozen here.
    """
    if sample.history is None:
        raise MissingHistory(f"{sample.site_id} t={sample.t} lacks a frame history")
    if isinstance(channel_model, TruthChannels):
        channels = channel_model.predict_history(sample.history, key=(sample.site_id, sample.t))
    else:
        channels = channel_model.predict_history(sample.history)
    x = feature_vector(sample.p_now, channels, sample.temp_now)
    return max(0.0, float(model.predict(x[None])[0]))


class CnnLstmChannels:
    """Adapter running the frozen CNN-LSTM on a frame history."""

    def __init__(self, model):
        self._model = model

    def predict_history(self, history: np.ndarray) -> np.ndarray:
        from .cnnlstm import cnnlstm_forward

        out = cnnlstm_forward(self._model.params, self._model.spec, history)
        return np.asarray(out, dtype=np.float64)


@dataclass
class FourWayResult:
    report: EvalReport
    predictions: dict[str, np.ndarray]
    site_ids: np.ndarray
    p_now: np.ndarray
    p_next: np.ndarray
    samples: list[NowcastSample]


def compare_four_models(
    samples: list[NowcastSample],
    nowcasters: dict[str, SvrModel],
    channel_model,
    deltas_pct,
    period: str = "full",
) -> FourWayResult:
    """All four predictors on the identical history-bearing sample set.

    Tolerance buckets use percent change of power between t and t+interval;
    skill is MAPE-based against persistence.
    """
    usable = [s for s in samples if s.history is not None and s.site_id in nowcasters]
    if not usable:
        raise EmptyTrainingSet("no evaluable nowcast samples")

    truth = TruthChannels({(s.site_id, s.t): s.c_next for s in usable})
    persist_chan = PersistenceChannels()
    cnn_chan = channel_model if hasattr(channel_model, "predict_history") else CnnLstmChannels(channel_model)

    preds = {name: np.empty(len(usable)) for name in FOUR_MODELS}
    for i, s in enumerate(usable):
        f = nowcasters[s.site_id]
        preds[MODEL_PERSISTENCE][i] = s.p_now
        preds[MODEL_CNNLSTM_SVR][i] = forecast_step(f, cnn_chan, s)
        preds[MODEL_SVR_CURRENT][i] = forecast_step(f, persist_chan, s)
        preds[MODEL_SVR_TRUTH][i] = forecast_step(f, truth, s)

    site_ids = np.array([s.site_id for s in usable])
    p_now = np.array([s.p_now for s in usable])
    p_next = np.array([s.p_next for s in usable])
    report = tolerance_report(
        site_ids,
        p_now,
        p_next,
        preds,
        deltas_pct,
        period=period,
        relative_percent=True,
        baseline=MODEL_PERSISTENCE,
        skill_metric="mape",
    )
    return FourWayResult(report, preds, site_ids, p_now, p_next, usable)
