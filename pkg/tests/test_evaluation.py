import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadeswitch.errors import InsufficientDataError, ShapeError, UsageError
from fadeswitch.evaluation import (
    PREDICTORS,
    SWEEP_CSV_COLUMNS,
    SWEEP_JSON_SCHEMA,
    ConfusionMatrix,
    cell_seed,
    confusion,
    parse_sweep_csv,
    rates,
    report,
    run_cell,
    sweep,
)
from fadeswitch.timeseries import AttenuationSeries, SynthParams, generate_synthetic
from fadeswitch.training import TrainConfig

FAST = TrainConfig(epochs=2, batch_size=32, learning_rate=5e-3)
CELL = {"hidden_size": 6}


@pytest.fixture(scope="module")
def rainy():
    # P[A > 5 dB] = Q(ln 5 - 1) ~ 0.27, decorrelation time 10 min
    return generate_synthetic(SynthParams(m_ln=1.0, sigma_ln=1.0, beta_inv_s=1 / 600, duration_s=3600, seed=5))


def test_four_sample_fixture():
    cm = confusion([1, 0, 0, 1], [1, 1, 0, 0])
    assert cm == ConfusionMatrix(tp=1, fp=1, fn=1, tn=1)
    r = rates(cm)
    assert r == {"fn_rate_total": 0.25, "fp_rate_total": 0.25, "miss_rate": 0.5, "false_alarm_rate": 0.5}
    assert cm.percents() == {"tp": 25.0, "fp": 25.0, "fn": 25.0, "tn": 25.0}


def test_all_correct_and_all_wrong():
    labels = np.array([1, 0, 1, 1, 0], bool)
    good, bad = confusion(labels, labels), confusion(~labels, labels)
    assert good.fp == good.fn == 0
    assert bad.tp == bad.tn == 0


def test_confusion_errors():
    with pytest.raises(ShapeError):
        confusion([1, 0], [1])
    with pytest.raises(InsufficientDataError):
        confusion([], [])


def test_conditional_rates_undefined_without_class():
    r = rates(confusion([0, 0], [0, 0]))
    assert r["miss_rate"] is None and r["false_alarm_rate"] == 0.0


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=200))
@settings(max_examples=100)
def test_percents_sum_to_100(pairs):
    pred, lab = zip(*pairs)
    cm = confusion(pred, lab)
    assert abs(sum(cm.percents().values()) - 100.0) <= 0.01
    assert cm.total == len(pairs)


def test_cell_seed_depends_on_coordinates():
    assert cell_seed(0, 5, 30) == cell_seed(0, 5.0, 30.0)
    assert len({cell_seed(0, a, d) for a in (5, 10) for d in (30, 60)}) == 4


def test_empty_alpha_list_gives_empty_grid(rainy):
    res = sweep(rainy, [], [10.0], FAST, seed=0, workers=1)
    assert res.cells == [] and res.rows() == []


def test_grid_shape_and_rows(rainy):
    res = sweep(rainy, [5.0, 8.0], [5.0, 10.0], FAST, seed=0, stride_samples=50, workers=2, **CELL)
    assert len(res.cells) == 4
    assert [(c.alpha_db, c.delta_t_s) for c in res.cells] == [(5, 5), (5, 10), (8, 5), (8, 10)]
    rows = res.rows()
    assert len(rows) == len(PREDICTORS) * 4
    for c in res.cells:
        assert not c.skipped
        assert c.metrics["airis2"].cm.total == c.metrics["ph"].cm.total == len(c.test_anchors)


def test_parallel_equals_serial(rainy):
    a = sweep(rainy, [5.0], [5.0, 10.0], FAST, seed=3, stride_samples=80, workers=1, **CELL)
    b = sweep(rainy, [5.0], [5.0, 10.0], FAST, seed=3, stride_samples=80, workers=2, **CELL)
    assert report(a, "csv") == report(b, "csv")
    assert report(a, "json") == report(b, "json")


def test_ph_independent_of_training(rainy):
    a = run_cell([rainy], 5.0, 10.0, FAST, seed=0, stride_samples=60, hidden_size=4)
    b = run_cell([rainy], 5.0, 10.0, TrainConfig(epochs=1, learning_rate=1e-2), seed=99, stride_samples=60, hidden_size=6)
    assert a.metrics["ph"] == b.metrics["ph"]
    np.testing.assert_array_equal(a.test_anchors, b.test_anchors)


def test_airis2_no_worse_than_ph_on_predictable_fades():
    s = generate_synthetic(SynthParams(m_ln=1.0, sigma_ln=1.0, beta_inv_s=1 / 3600, duration_s=4 * 3600, seed=2))
    c = run_cell([s], 5.0, 10.0, TrainConfig(epochs=3, batch_size=32, learning_rate=5e-3), seed=0,
                 stride_samples=20, hidden_size=8)
    assert rates(c.metrics["airis2"].cm)["fn_rate_total"] <= rates(c.metrics["ph"].cm)["fn_rate_total"]


def test_single_class_cell_is_skipped():
    calm = AttenuationSeries("calm", np.full(3000, 1.0))
    res = sweep(calm, [5.0], [5.0], FAST, seed=0, stride_samples=10, workers=1, **CELL)
    (c,) = res.cells
    assert c.skipped and "SingleClassError" in c.reason
    assert all(r["skipped"] and r["n_test"] == 0 for r in res.rows())


def test_too_short_cell_is_skipped():
    res = sweep(AttenuationSeries("s", np.arange(50.0)), [5.0], [30.0], FAST, seed=0, workers=1)
    assert res.cells[0].skipped and "InsufficientDataError" in res.cells[0].reason


@pytest.fixture(scope="module")
def small_result(rainy):
    calm = AttenuationSeries("calm", np.full(3000, 1.0))
    good = sweep(rainy, [5.0], [5.0], FAST, seed=1, stride_samples=60, workers=1, **CELL)
    bad = sweep(calm, [5.0], [5.0], FAST, seed=1, stride_samples=60, workers=1, **CELL)
    good.cells += bad.cells
    good.deltas = [5.0]
    return good


def test_csv_round_trip(small_result):
    payload = report(small_result, "csv")
    assert payload.splitlines()[0].decode() == ",".join(SWEEP_CSV_COLUMNS)
    rows = parse_sweep_csv(payload)
    assert rows == small_result.rows()


def test_json_matches_schema(small_result):
    doc = json.loads(report(small_result, "json"))
    jsonschema.validate(doc, SWEEP_JSON_SCHEMA)
    assert len(doc["rows"]) == 2 * len(small_result.cells)
    for c in doc["confusion"]:
        assert c["tp"] + c["fp"] + c["fn"] + c["tn"] > 0


def test_unknown_format(small_result):
    with pytest.raises(UsageError):
        report(small_result, "xml")
