import numpy as np
import pytest

from dartfx.hypertime.baselines import fremen_predictor, hist_predictor
from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import EvaluationError, ModelError
from dartfx.hypertime.evaluation import (
    EVENT_METHODS,
    EvaluationGrid,
    compare_events,
    compare_valued,
    covering_spec,
    error_reduction,
    grid_count,
    heatmap_keys,
    heatmap_rows,
    histogram_l1,
    pairwise_ttests,
    per_cell_baseline,
    rmse,
    sweep,
)
from dartfx.hypertime.model import DAY, BaselineConfig, BuildConfig, EvaluationConfig, FitConfig, GridSpec
from dartfx.hypertime.synthetic import HOUR, daily_cosine, folds


def _events(points, times) -> Dataset:
    return Dataset(times=np.asarray(times, dtype=float), coords=np.asarray(points, dtype=float))


@pytest.fixture
def unit_spec() -> GridSpec:
    return GridSpec(lower=[0.0, 0.0], upper=[1.0, 1.0], spatial_cell=0.5, t_start=0.0, t_end=20.0, temporal_cell=10.0)


def test_rmse_examples():
    assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert rmse([2.0], [-1.0]) == pytest.approx(3.0)


def test_rmse_rejects_bad_input():
    with pytest.raises(EvaluationError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(EvaluationError):
        rmse([], [])


def test_grid_count(unit_spec):
    events = _events([[0.1, 0.1], [0.6, 0.1], [0.6, 0.1], [0.5, 0.5], [1.0, 0.2], [0.1, 0.9]], [0, 0, 15, 19.9, 0, 20])
    grid = grid_count(events, unit_spec)
    assert grid.counts.shape == (2, 2, 2)
    assert grid.counts[0, 0, 0] == 1
    assert grid.counts[1, 0, 0] == 1
    assert grid.counts[1, 0, 1] == 1
    assert grid.counts[1, 1, 1] == 1
    assert grid.total == 4


def test_grid_count_rejects_empty_box():
    spec = GridSpec(lower=[0.0], upper=[0.0], spatial_cell=0.5, t_start=0.0, t_end=10.0)
    with pytest.raises(EvaluationError):
        grid_count(_events([[0.0]], [0.0]), spec)


def test_histogram_l1(unit_spec):
    first = EvaluationGrid(spec=unit_spec, counts=np.zeros((2, 2, 2)))
    second = EvaluationGrid(spec=unit_spec, counts=np.full((2, 2, 2), 0.5))
    assert histogram_l1(first, second) == pytest.approx(4.0)
    assert histogram_l1(second, second) == 0.0
    other = unit_spec.model_copy(update={"t_end": 30.0})
    with pytest.raises(EvaluationError):
        histogram_l1(first, EvaluationGrid(spec=other, counts=np.zeros((2, 2, 3))))


def test_evaluation_grid_validation(unit_spec):
    with pytest.raises(ValueError, match="shape"):
        EvaluationGrid(spec=unit_spec, counts=np.zeros((2, 2)))
    with pytest.raises(ValueError, match="non-negative"):
        EvaluationGrid(spec=unit_spec, counts=np.full((2, 2, 2), -1.0))


def test_covering_spec_contains_every_event():
    rng = np.random.default_rng(2)
    events = _events(rng.uniform(0, 3, (100, 2)), np.sort(rng.uniform(0, DAY, 100)))
    spec = covering_spec(events, 0.25, 900.0)
    assert grid_count(events, spec).total == 100


def test_heatmap_rows(unit_spec):
    observed = EvaluationGrid(spec=unit_spec, counts=np.arange(8.0).reshape(2, 2, 2))
    frame = heatmap_rows(observed, observed)
    assert list(frame.columns) == ["x1", "x2", "t_bin", "d", "p"]
    assert len(frame) == 8
    assert frame.iloc[1].tolist() == [0.25, 0.25, 1.0, 1.0, 1.0]


def test_ttests_identical_errors_are_degenerate():
    report = pairwise_ttests({"A": [1.0, 2.0, 3.0], "B": [1.0, 2.0, 3.0]})
    assert report.edges == []
    test = report.matrix()["A"]["B"]
    assert test.degenerate
    assert test.t_statistic == 0.0
    assert test.p_value == 1.0


def test_ttests_constant_difference_is_degenerate():
    report = pairwise_ttests({"A": [1.0, 2.0, 3.0], "B": [2.0, 3.0, 4.0]})
    test = report.matrix()["A"]["B"]
    assert test.degenerate
    assert test.t_statistic is None
    assert test.p_value is None
    assert report.edges == []


def test_ttests_find_dominance():
    rng = np.random.default_rng(0)
    b = rng.uniform(20, 30, 10)
    a = b - 10 + rng.normal(0, 0.5, 10)
    report = pairwise_ttests({"A": a.tolist(), "B": b.tolist()}, alpha=0.05)
    assert report.edges == [("A", "B")]
    assert report.matrix()["A"]["B"].p_value < 1e-6
    assert not report.matrix()["B"]["A"].significant
    assert report.matrix()["A"]["A"] is None
    assert len(report.tests) == 2


def test_ttests_are_antisymmetric():
    rng = np.random.default_rng(3)
    report = pairwise_ttests({m: rng.uniform(1.0, 2.0, 6).tolist() for m in ("A", "B", "C")})
    matrix = report.matrix()
    for a, b in [("A", "B"), ("A", "C"), ("B", "C")]:
        assert matrix[a][b].t_statistic == pytest.approx(-matrix[b][a].t_statistic)
        assert matrix[a][b].p_value == pytest.approx(matrix[b][a].p_value)
        assert not (matrix[a][b].significant and matrix[b][a].significant)


def test_ttests_need_matching_folds():
    with pytest.raises(EvaluationError):
        pairwise_ttests({"A": [1.0, 2.0], "B": [1.0]})
    with pytest.raises(EvaluationError):
        pairwise_ttests({"A": [1.0], "B": [2.0]})


@pytest.fixture(scope="module")
def cosine_split():
    data = daily_cosine(days=14, step=600.0)
    boundary = 10 * DAY
    return data.subset(data.times < boundary), data.subset(data.times >= boundary)


def test_sweep_picks_finest_hist(cosine_split):
    result = sweep(*cosine_split, hist_predictor, [1, 2, 4, 24])
    assert result.best == 24
    assert set(result.scores) == {1, 2, 4, 24}


def test_sweep_picks_one_fremen_component(cosine_split):
    result = sweep(*cosine_split, lambda d, m: fremen_predictor(d, m), [0, 1])
    assert result.best == 1
    assert result.scores[1] == pytest.approx(0.0, abs=1e-9)


def test_sweep_breaks_ties_towards_smaller_parameters(cosine_split):
    result = sweep(*cosine_split, lambda d, m: fremen_predictor(d, 1), [3, 2])
    assert result.best == 2


def test_sweep_skips_failures(cosine_split):
    result = sweep(*cosine_split, hist_predictor, [0, 4])
    assert result.skipped == [0]
    assert result.best == 4
    with pytest.raises(EvaluationError):
        sweep(*cosine_split, hist_predictor, [0, -1])


def test_error_reduction():
    reduction = error_reduction({"Mean": 2.0, "HyT": 1.5, "Bad": 3.0})
    assert reduction == {"Mean": 0.0, "HyT": 0.25, "Bad": -0.5}
    with pytest.raises(EvaluationError):
        error_reduction({"HyT": 1.0})
    with pytest.raises(EvaluationError):
        error_reduction({"Mean": 0.0})


def test_per_cell_mean_baseline_is_cell_average():
    times = [0.5 * HOUR, 1.5 * HOUR, 2.5 * HOUR, 3.5 * HOUR, 0.2 * HOUR]
    train = _events([[0.1], [0.1], [0.1], [0.1], [0.7]], times)
    spec = GridSpec(lower=[0.0], upper=[1.0], spatial_cell=0.5, t_start=4 * HOUR, t_end=6 * HOUR, temporal_cell=HOUR)
    grid = per_cell_baseline(train, spec, BaselineConfig(kind="mean"))
    np.testing.assert_allclose(grid.counts[0], [1.0, 1.0])
    np.testing.assert_allclose(grid.counts[1], [0.25, 0.25])


def test_per_cell_mean_scales_training_total_to_test_duration():
    rng = np.random.default_rng(11)
    times = np.linspace(0.0, 10 * HOUR, 200, endpoint=False)
    train = _events(rng.uniform(0.0, 1.0, (200, 2)), times)
    spec = GridSpec(
        lower=[0.0, 0.0], upper=[1.0, 1.0], spatial_cell=0.25, t_start=20 * HOUR, t_end=26 * HOUR, temporal_cell=HOUR
    )
    grid = per_cell_baseline(train, spec, BaselineConfig(kind="mean"))
    assert grid.counts.sum() == pytest.approx(200 * 6 / 10, rel=1e-6)


def test_zero_baseline_predicts_empty_cells():
    train = _events([[0.1], [0.7]], [0.0, HOUR])
    spec = GridSpec(lower=[0.0], upper=[1.0], spatial_cell=0.5, t_start=2 * HOUR, t_end=4 * HOUR, temporal_cell=HOUR)
    assert not per_cell_baseline(train, spec, BaselineConfig(kind="zero")).counts.any()


def test_heatmap_keys_are_fold_major():
    cfg = EvaluationConfig(grid_spatial=[0.1, 0.2], grid_temporal=[600.0, 1800.0])
    assert heatmap_keys(2, cfg)[:4] == ["1_0.1_600", "1_0.1_1800", "1_0.2_600", "1_0.2_1800"]
    assert heatmap_keys(2, cfg)[4] == "2_0.1_600"
    assert len(heatmap_keys(2, cfg)) == 8


def test_per_cell_baseline_needs_matching_cells():
    train = _events([[0.1]], [0.0])
    spec = GridSpec(lower=[0.0], upper=[1.0], spatial_cell=0.5, t_start=0.0, t_end=HOUR, temporal_cell=HOUR)
    other = spec.model_copy(update={"upper": [2.0]})
    with pytest.raises(EvaluationError):
        per_cell_baseline(train, spec, BaselineConfig(), train_spec=other)


@pytest.mark.slow
def test_compare_valued_on_daily_rhythm():
    train, tests = folds("daily", 2, 3, seed=4)
    cfg = EvaluationConfig(hist_intervals=[1, 24], fremen_orders=[0, 1, 2], clusters=[1, 2])
    build_cfg = BuildConfig(fit=FitConfig(n_clusters=1), max_h=3, max_clusters=2)
    report, predictors = compare_valued(train, tests, build_cfg, cfg)
    assert report.methods == ["Mean", "Hist", "FreMEn", "HyT-EM", "HyT-KM"]
    assert report.folds == 3
    assert report.parameters["Hist"] == 24
    assert report.parameters["FreMEn"] >= 1
    assert report.mean_errors["HyT-EM"] < report.mean_errors["Mean"]
    assert ("HyT-EM", "Mean") in report.edges
    assert ("HyT-KM", "Mean") in report.edges
    assert report.error_reduction["Mean"] == 0.0
    assert report.error_reduction["HyT-EM"] > 0
    assert set(predictors) == set(report.methods)


def test_compare_valued_needs_tests(cosine_data):
    with pytest.raises(EvaluationError):
        compare_valued(cosine_data, [])


@pytest.mark.slow
def test_compare_events_is_deterministic():
    train, tests = folds("pedestrian", 1, 2, seed=8)
    cfg = EvaluationConfig(
        grid_spatial=[0.2], grid_temporal=[1800.0], hist_intervals=[1, 24], fremen_orders=[0, 1], clusters=[1, 2]
    )
    build_cfg = BuildConfig(fit=FitConfig(n_clusters=2), max_h=1)
    first = compare_events(train, tests, build_cfg, cfg)
    second = compare_events(train, tests, build_cfg, cfg)
    assert first.report == second.report
    report = first.report
    assert report.methods == list(EVENT_METHODS)
    assert set(report.parameters) == {"Hist", "FreMEn", "HyT-EM", "HyT-KM"}
    assert report.parameters["Hist"] in (1, 24)
    assert report.parameters["FreMEn"] in (0, 1)
    assert report.parameters["HyT-KM"] in (1, 2)
    assert set(report.l1_errors) == set(EVENT_METHODS)
    assert all(len(v) == 2 for v in report.l1_errors.values())
    assert report.error_reduction["Mean"] == 0.0
    for fold in (1, 2):
        observed = first.heatmaps[f"{fold}_0.2_1800"]["observed"].counts
        assert report.errors["Zero"][fold - 1] == pytest.approx(np.sqrt(np.mean(observed**2)))
        assert report.l1_errors["Zero"][fold - 1] == pytest.approx(observed.sum())
    assert set(first.heatmaps) == {"1_0.2_1800", "2_0.2_1800"}
    assert set(first.heatmaps["1_0.2_1800"]) == {"observed", *first.report.methods}


def test_sweep_factory_errors_are_hypertime_errors(cosine_split):
    def broken(_train, _k):
        raise ModelError("nope")

    with pytest.raises(EvaluationError):
        sweep(*cosine_split, broken, [1])
