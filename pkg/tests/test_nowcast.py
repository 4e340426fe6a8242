import numpy as np
import pytest

from helios.errors import AlignmentError, MissingHistory
from helios.nowcast import (
    PersistenceChannels,
    TruthChannels,
    build_nowcast_features,
    compare_four_models,
    feature_vector,
    forecast_step,
    train_nowcaster,
)
from helios.sitecube import ScalarSeries
from helios.svr import SvrSpec
from helios.synth import SceneSpec, generate_site

SCENE = SceneSpec(seed=31, grid_edge=24, window=6, velocity=(1.0, 0.0),
                  velocity_jitter=0.15)


def site_data(n_days=6, site=0, spec=SCENE):
    cube, power, temp = generate_site(spec, site, n_days=n_days)
    return cube, power, temp


@pytest.fixture(scope="module")
def nowcast_samples():
    cube, power, temp = site_data()
    return build_nowcast_features(cube, power, temp, 900, steps=4)


class TestBuildFeatures:
    def test_counting_per_day(self):
        cube, power, temp = site_data(n_days=1)
        samples = build_nowcast_features(cube, power, temp, 900, steps=4)
        # solar window [9,15): t up to 14:30, so 23 eligible pairs per day
        assert len(samples) == 23
        with_history = [s for s in samples if s.history is not None]
        assert len(with_history) == 20  # the 9:00..9:30 starts lack 4 frames

    def test_missing_temperature_drops_sample(self):
        cube, power, temp = site_data(n_days=1)
        keep = temp.timestamps != temp.timestamps[10]
        temp2 = ScalarSeries("temperature_C", temp.timestamps[keep], temp.values[keep])
        full = build_nowcast_features(cube, power, temp, 900, steps=4)
        poked = build_nowcast_features(cube, power, temp2, 900, steps=4)
        assert len(poked) == len(full) - 1

    def test_feature_layout(self):
        x = feature_vector(3.5, np.array([0.1, 0.2, 0.3]), 21.0)
        assert x.tolist() == [3.5, 0.1, 0.2, 0.3, 21.0]

    def test_alignment_error_on_cadence(self):
        cube, power, temp = site_data(n_days=1)
        with pytest.raises(AlignmentError):
            build_nowcast_features(cube, power, temp, 300, steps=4)

    def test_alignment_error_on_offgrid_power(self):
        cube, power, temp = site_data(n_days=1)
        bad = ScalarSeries("power_kW", power.timestamps + 60, power.values)
        with pytest.raises(AlignmentError):
            build_nowcast_features(cube, bad, temp, 900, steps=4)


class TestTrainNowcaster:
    def test_constant_power_site(self, nowcast_samples):
        flat = []
        for s in nowcast_samples:
            t = type(s)(**{**s.__dict__})
            t.p_now, t.p_next = 5.0, 5.0
            flat.append(t)
        model = train_nowcaster(flat, SvrSpec())
        preds = [forecast_step(model, PersistenceChannels(), s)
                 for s in flat if s.history is not None]
        assert np.abs(np.array(preds) - 5.0).max() < 1e-9

    def test_planted_linear_ground_truth(self, nowcast_samples):
        rng = np.random.default_rng(0)
        planted = []
        for s in nowcast_samples:
            t = type(s)(**{**s.__dict__})
            t.p_next = 0.9 * t.p_now + 3.0 * float(t.c_next[0])
            planted.append(t)
        train = [s for s in planted if s.local_day.day <= 4]
        held = [s for s in planted if s.local_day.day > 4]
        model = train_nowcaster(train, SvrSpec(C=100.0, epsilon=0.005))
        truth = TruthChannels({(s.site_id, s.t): s.c_next for s in held})
        preds = np.array([forecast_step(model, truth, s) for s in held if s.history is not None])
        actual = np.array([s.p_next for s in held if s.history is not None])
        assert np.abs(preds - actual).mean() < 0.02 * actual.mean()

    def test_train_time_channel_swap_degrades(self, nowcast_samples):
        train = [s for s in nowcast_samples if s.local_day.day <= 4]
        held = [s for s in nowcast_samples if s.local_day.day > 4 and s.history is not None]
        spec = SvrSpec()
        standard = train_nowcaster(train, spec)

        swapped_train = []
        for s in train:
            t = type(s)(**{**s.__dict__})
            t.c_next = s.c_now  # pretend the current channels are the future ones
            swapped_train.append(t)
        swapped = train_nowcaster(swapped_train, spec)

        truth = TruthChannels({(s.site_id, s.t): s.c_next for s in held})
        pers = PersistenceChannels()
        actual = np.array([s.p_next for s in held])
        err_std = np.abs(np.array([forecast_step(standard, truth, s) for s in held]) - actual).mean()
        err_swp = np.abs(np.array([forecast_step(swapped, pers, s) for s in held]) - actual).mean()
        assert err_std < err_swp


class TestForecastStep:
    def test_missing_history(self, nowcast_samples):
        s = next(x for x in nowcast_samples if x.history is None)
        model = train_nowcaster(nowcast_samples, SvrSpec())
        with pytest.raises(MissingHistory):
            forecast_step(model, PersistenceChannels(), s)

    def test_truth_channels_reproduce_lower_bound_inputs(self, nowcast_samples):
        s = next(x for x in nowcast_samples if x.history is not None)
        truth = TruthChannels({(s.site_id, s.t): s.c_next})
        model = train_nowcaster(nowcast_samples, SvrSpec())
        got = forecast_step(model, truth, s)
        direct = max(0.0, float(model.predict(
            feature_vector(s.p_now, s.c_next, s.temp_now)[None])[0]))
        assert got == direct

    def test_negative_prediction_clamped(self, nowcast_samples):
        train = []
        for s in nowcast_samples:
            t = type(s)(**{**s.__dict__})
            t.p_next = t.p_now - 100.0  # force a regressor that goes negative
            train.append(t)
        model = train_nowcaster(train, SvrSpec(C=100.0))
        s = next(x for x in nowcast_samples if x.history is not None)
        assert forecast_step(model, PersistenceChannels(), s) == 0.0


@pytest.fixture(scope="module")
def result():
    nowcasters = {}
    test_samples = []
    for site in range(2):
        cube, power, temp = site_data(n_days=6, site=site)
        samples = build_nowcast_features(cube, power, temp, 900, steps=4)
        train = [s for s in samples if s.local_day.day <= 4]
        nowcasters[cube.meta.site_id] = train_nowcaster(train, SvrSpec())
        test_samples.extend(s for s in samples if s.local_day.day > 4)
    truth_map = {(s.site_id, s.t): s.c_next for s in test_samples}
    return compare_four_models(
        test_samples, nowcasters, TruthChannels(truth_map), [0.0, 2.0, 5.0]
    )


class TestFourWay:
    def test_identity_persistence_channels_is_current_bound(self, result):
        # definitional: the upper bound is forecast_step with persistence channels
        assert np.array_equal(result.predictions["cnnlstm_svr"], result.predictions["svr_truth"])

    def test_bucket_sets_identical(self, result):
        for delta in (0.0, 2.0, 5.0):
            ns = {r.model: r.n for r in result.report.select(delta=delta, scope="ALL")}
            assert len(set(ns.values())) == 1

    def test_persistence_skill_zero(self, result):
        for row in result.report.select(model="persistence"):
            assert row.skill == 0.0

    def test_bounds_order_on_moving_clouds(self, result):
        for delta in (0.0, 2.0, 5.0):
            rows = {r.model: r.mape for r in result.report.select(delta=delta, scope="ALL")}
            assert rows["svr_truth"] <= rows["svr_current"] * 1.05
