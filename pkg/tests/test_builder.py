import numpy as np
import pytest

from dartfx.hypertime.builder import build, build_any, build_event, select_cluster_count
from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import ModelError
from dartfx.hypertime.evaluation import covering_spec, model_grid
from dartfx.hypertime.model import DAY, WEEK, BuildConfig, FitConfig
from dartfx.hypertime.predict import predict_cell_count, predict_mean
from dartfx.hypertime.synthetic import daily_weekly, pedestrian_events, spatial_blobs


def _cfg(clusters: int = 1, max_h: int = 5, **kwargs) -> BuildConfig:
    return BuildConfig(fit=FitConfig(n_clusters=clusters), max_h=max_h, **kwargs)


@pytest.fixture(scope="module")
def daily_model(daily_data):
    return build(daily_data, _cfg())


@pytest.fixture(scope="module")
def event_model():
    return build_event(pedestrian_events(days=7, seed=3), _cfg(clusters=2, max_h=2))


def _check_log(model, max_h):
    log = model.build_log
    assert log[0].h == 0
    assert log[0].period is None
    for previous, step in zip(log, log[1:], strict=False):
        if step.accepted:
            assert step.error < previous.error
    accepted = [s for s in log if s.accepted]
    assert accepted[-1].h == model.projection.h
    assert accepted[-1].error == pytest.approx(model.training_error)
    assert not log[-1].accepted or model.projection.h == max_h
    assert all(s.accepted for s in log[:-1])


def test_daily_rhythm_recovers_the_day(daily_model):
    assert daily_model.periods[0] == DAY
    _check_log(daily_model, 5)


def test_daily_rhythm_halves_the_error(daily_model):
    assert daily_model.training_error < 0.5 * daily_model.build_log[0].error


def test_gamma_matches_training_mean(daily_model, daily_data):
    assert not daily_model.gamma_degenerate
    predicted = predict_mean(daily_model, None, daily_data.times)
    assert np.mean(predicted) == pytest.approx(daily_data.values.mean(), rel=1e-9)


def test_weekly_and_daily_components_recovered():
    model = build(daily_weekly(weeks=4, seed=5), _cfg(max_h=3))
    assert model.periods[:2] == [WEEK, DAY]


def test_time_independent_data_keeps_no_periods(field_data):
    model = build(field_data, _cfg())
    assert model.projection.h == 0
    assert len(model.build_log) == 2
    assert not model.build_log[1].accepted


def test_zero_extensions(daily_data):
    model = build(daily_data, _cfg(max_h=0))
    assert model.projection.h == 0
    assert len(model.build_log) == 1
    assert model.training_error == pytest.approx(model.build_log[0].error)


def test_build_is_deterministic(cosine_data):
    cfg = _cfg(clusters=2, max_h=2)
    assert build(cosine_data, cfg).model_dump_json() == build(cosine_data, cfg).model_dump_json()


def test_build_rejects_wrong_mode(daily_data):
    events = pedestrian_events(days=1)
    with pytest.raises(ModelError):
        build(events)
    with pytest.raises(ModelError):
        build_event(daily_data)
    with pytest.raises(ModelError):
        build_event(Dataset(times=[0.0, 1.0, 2.0], coords=np.zeros((3, 0))))


def test_build_any_dispatches(cosine_data):
    assert build_any(cosine_data, _cfg(max_h=0)).mode == "valued"


def test_cluster_selection_respects_cap(daily_data):
    selection = select_cluster_count(daily_data, _cfg(max_h=0, max_clusters=1))
    assert selection.chosen == 1
    assert [n for n, _ in selection.pairs] == [1]


def test_cluster_selection_rule(daily_data):
    selection = select_cluster_count(daily_data, _cfg(max_h=0, max_clusters=4))
    totals = dict(selection.pairs)
    n = selection.chosen
    assert [k for k, _ in selection.pairs] == list(range(1, len(selection.pairs) + 1))
    for k in range(1, n):
        assert totals[k] > totals[k + 1]
    if n + 1 in totals:
        assert totals[n + 1] >= totals[n] * (1 - 1e-9)
    else:
        assert n == 4


def test_cluster_selection_separates_blobs():
    blobs = spatial_blobs(centers=((0.0,), (1.0,), (10.0,)), levels=(1.0, 10.0, 1.5), spread=0.0, seed=5)
    assert select_cluster_count(blobs, _cfg(max_h=0, max_clusters=4)).chosen >= 3


def test_cluster_selection_single_blob_noise():
    blob = spatial_blobs(centers=((2.0, 1.0),), levels=(1.0,), spread=0.0, seed=5)
    assert select_cluster_count(blob, _cfg(max_h=0, max_clusters=4)).chosen <= 2


def test_cluster_selection_is_deterministic(daily_data):
    cfg = _cfg(max_h=0, max_clusters=3)
    assert select_cluster_count(daily_data, cfg) == select_cluster_count(daily_data, cfg)


def test_auto_clusters_record_the_selection(daily_data):
    model = build(daily_data, _cfg(max_h=1, auto_clusters=True, max_clusters=2))
    assert model.cluster_selection is not None
    assert model.mixture.n_components == model.cluster_selection.chosen


def test_cluster_selection_needs_values():
    with pytest.raises(ModelError):
        select_cluster_count(pedestrian_events(days=1))


def test_event_build_rejects_auto_clusters():
    with pytest.raises(ModelError, match="valued"):
        build_event(pedestrian_events(days=1), _cfg(auto_clusters=True))


@pytest.mark.slow
def test_event_model_finds_the_day(event_model):
    assert event_model.mode == "event"
    assert DAY in event_model.periods
    assert event_model.gamma > 0
    _check_log(event_model, 2)


@pytest.mark.slow
@pytest.mark.parametrize(("spatial", "temporal"), [(0.05, 1800.0), (0.2, 300.0)])
def test_event_model_mass_matches_event_count(event_model, spatial, temporal):
    events = pedestrian_events(days=7, seed=3)
    grid = model_grid(event_model, covering_spec(events, spatial, temporal))
    assert grid.total == pytest.approx(len(events), rel=0.02)


@pytest.mark.slow
def test_event_model_far_cells_stay_empty(event_model):
    events = pedestrian_events(days=7, seed=3)
    far = predict_cell_count(event_model, [6.0, 6.0], [6.2, 6.2], 0.0, 1800.0)
    assert far < 0.01 * model_grid(event_model, covering_spec(events, 0.2, 1800.0)).counts.max()
