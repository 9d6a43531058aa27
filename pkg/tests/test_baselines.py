import numpy as np
import pytest

from dartfx.hypertime.baselines import (
    FreMEnPredictor,
    HistPredictor,
    MeanPredictor,
    ZeroPredictor,
    fit_baseline,
    fremen_predictor,
    hist_predictor,
    mean_predictor,
)
from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import ModelError
from dartfx.hypertime.model import DAY, BaselineConfig
from dartfx.hypertime.synthetic import HOUR, pedestrian_events


def _series(times, values) -> Dataset:
    times = np.asarray(times, dtype=float)
    return Dataset(times=times, coords=np.zeros((times.size, 0)), values=np.asarray(values, dtype=float))


def test_mean_predictor():
    predictor = mean_predictor(_series([0.0, 10.0, 20.0], [1.0, 2.0, 6.0]))
    np.testing.assert_allclose(predictor.predict([5.0, 1e9]), [3.0, 3.0])
    assert predictor.name == "Mean"


def test_zero_predictor():
    predictor = ZeroPredictor()
    assert predictor.predict([1.0, 2.0]).tolist() == [0.0, 0.0]
    assert repr(predictor) == "<ZeroPredictor Zero>"


def test_single_interval_hist_is_the_mean(daily_data):
    hist = hist_predictor(daily_data, 1)
    mean = mean_predictor(daily_data)
    np.testing.assert_allclose(hist.predict(daily_data.times), mean.predict(daily_data.times), rtol=1e-12)


def test_hist_follows_daily_rhythm(daily_data):
    hist = hist_predictor(daily_data, 24)
    assert hist.name == "Hist_24"
    noon, night = hist.predict([12 * HOUR, 3 * HOUR + 5 * DAY])
    assert noon == pytest.approx(1.0, abs=0.05)
    assert night == pytest.approx(0.0, abs=0.05)


def test_hist_empty_slot_predicts_global_mean():
    train = _series([1 * HOUR, 2 * HOUR, DAY + 3 * HOUR], [1.0, 2.0, 3.0])
    hist = hist_predictor(train, 2)
    np.testing.assert_allclose(hist.profile, [2.0, 2.0])
    np.testing.assert_allclose(hist.predict([18 * HOUR]), [2.0])


def test_hist_interval_boundaries():
    hist = HistPredictor(4, np.array([0.0, 1.0, 2.0, 3.0]))
    times = [0.0, 6 * HOUR - 1, 6 * HOUR, DAY - 1, DAY, -1.0]
    assert hist.predict(times).tolist() == [0.0, 0.0, 1.0, 3.0, 0.0, 3.0]


def test_hist_rejects_zero_intervals(daily_data):
    with pytest.raises(ModelError):
        hist_predictor(daily_data, 0)


def test_fremen_order_zero_is_the_mean(cosine_data):
    fremen = fremen_predictor(cosine_data, 0)
    assert fremen.name == "FreMEn_0"
    np.testing.assert_allclose(fremen.predict(cosine_data.times), cosine_data.values.mean())


def test_fremen_reconstructs_a_cosine(cosine_data):
    fremen = fremen_predictor(cosine_data, 1)
    assert fremen.periods.tolist() == [DAY]
    np.testing.assert_allclose(fremen.predict(cosine_data.times), cosine_data.values, atol=1e-9)


def test_fremen_prediction_formula():
    fremen = FreMEnPredictor(1.0, [DAY], np.array([0.25 - 0.25j]))
    quarter = DAY / 4
    np.testing.assert_allclose(fremen.predict([0.0, quarter]), [1.5, 1.5])


def test_fremen_custom_candidates(cosine_data):
    fremen = fremen_predictor(cosine_data, 1, candidates=[DAY / 2, DAY / 3])
    assert fremen.periods.size == 1
    assert fremen.periods[0] in (DAY / 2, DAY / 3)


def test_fremen_rejects_negative_order(cosine_data):
    with pytest.raises(ModelError):
        fremen_predictor(cosine_data, -1)


def test_baselines_need_values():
    with pytest.raises(ModelError):
        mean_predictor(pedestrian_events(days=1))


@pytest.mark.parametrize(
    ("cfg", "expected"),
    [
        (BaselineConfig(kind="mean"), MeanPredictor),
        (BaselineConfig(kind="hist", n_intervals=6), HistPredictor),
        (BaselineConfig(kind="fremen", m_components=2), FreMEnPredictor),
        (BaselineConfig(kind="zero"), ZeroPredictor),
    ],
)
def test_fit_baseline_dispatch(cfg, expected, cosine_data):
    assert isinstance(fit_baseline(cfg, cosine_data), expected)
