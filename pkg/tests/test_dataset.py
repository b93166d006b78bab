import numpy as np
import pytest
from collections import Counter
from hypothesis import given, settings, strategies as st

from fadeswitch.dataset import (
    LabeledWindow,
    WindowSpec,
    apply_normalization,
    balance,
    build_split,
    export_dataset,
    fit_normalization,
    load_dataset,
    make_windows,
    split_random,
    stack,
)
from fadeswitch.errors import DegenerateDataError, InsufficientDataError, SingleClassError
from fadeswitch.timeseries import AttenuationSeries, SynthParams, generate_synthetic

from conftest import step_series


def brute_force_labels(values, rate, spec):
    """Independent label oracle: direct indexing, one anchor at a time."""
    hs = int(round(spec.history_s * rate))
    k = int(round(spec.delta_t_s * rate))
    out = []
    t = hs
    while t + k <= len(values) - 1:
        out.append((t, values[t + k] > spec.alpha_db, values[t - hs : t + 1]))
        t += spec.stride_samples
    return out


def test_window_spec_defaults():
    spec = WindowSpec(alpha_db=5, delta_t_s=60)
    assert spec.history_s == 120
    assert spec.window_len(10.0) == 1201
    assert spec.horizon_samples(10.0) == 600


def test_constant_above_threshold_all_positive():
    s = AttenuationSeries("c", np.full(200, 7.0))
    ws = make_windows(s, WindowSpec(5, 2))
    assert ws and all(w.label for w in ws)


def test_constant_at_threshold_all_negative():
    s = AttenuationSeries("c", np.full(200, 7.0))
    assert not any(w.label for w in make_windows(s, WindowSpec(7, 2)))


def test_window_layout_oldest_to_newest():
    s = AttenuationSeries("r", np.arange(100.0))
    ws = make_windows(s, WindowSpec(50, 1.0))  # L = 21, horizon 10
    w = ws[0]
    assert w.anchor_index == 20
    np.testing.assert_array_equal(w.features, np.arange(21.0))
    assert w.features[-1] == s.values[w.anchor_index]
    assert ws[-1].anchor_index == 100 - 1 - 10


@pytest.mark.parametrize("history_s", [None, 20.0])
def test_step_label_flips_at_first_anchor_reaching_step(history_s):
    rate = 10.0
    s = step_series(1000, 2000, rate=rate)  # 0 dB before t = 100 s, 10 dB after
    spec = WindowSpec(5, 60, history_s)
    ws = make_windows(s, spec)
    oracle = brute_force_labels(s.values, rate, spec)
    assert [(w.anchor_index, w.label) for w in ws] == [(a, bool(l)) for a, l, _ in oracle]
    first_true = next(w.anchor_index for w in ws if w.label)
    expected = max(ws[0].anchor_index, 400)  # first t with t + 60 s >= 100 s
    assert first_true == expected
    assert all(w.label == (w.anchor_index >= expected) for w in ws)


def test_insufficient_data():
    s = AttenuationSeries("c", np.ones(30))
    with pytest.raises(InsufficientDataError):
        make_windows(s, WindowSpec(5, 1.0))  # needs 21 + 10 samples
    assert len(make_windows(AttenuationSeries("c", np.ones(31)), WindowSpec(5, 1.0))) == 1


@given(
    seed=st.integers(0, 2**31),
    alpha=st.floats(0.2, 8),
    delta=st.sampled_from([0.5, 1.0, 2.3]),
    stride=st.integers(1, 7),
)
@settings(max_examples=40, deadline=None)
def test_label_oracle_equivalence(seed, alpha, delta, stride):
    s = generate_synthetic(SynthParams(m_ln=0.5, sigma_ln=1.0, beta_inv_s=0.2, duration_s=30, seed=seed))
    spec = WindowSpec(alpha, delta, stride_samples=stride)
    got = make_windows(s, spec)
    want = brute_force_labels(s.values, s.sample_rate_hz, spec)
    assert len(got) == len(want)
    for w, (a, lab, feat) in zip(got, want):
        assert w.anchor_index == a and w.label == lab
        np.testing.assert_array_equal(w.features, feat)


def _windows(n_pos, n_neg, L=3):
    return [LabeledWindow(np.full(L, float(k)), k < n_pos, k) for k in range(n_pos + n_neg)]


def test_split_sizes_70_15_15():
    sp = split_random(_windows(30, 70), seed=1)
    assert sp.sizes() == {"train": 70, "val": 15, "test": 15}


def test_split_single_window_goes_to_train():
    sp = split_random(_windows(1, 0), seed=0)
    assert sp.sizes() == {"train": 1, "val": 0, "test": 0}


def test_split_deterministic_and_disjoint():
    ws = _windows(40, 57)
    a, b = split_random(ws, seed=3), split_random(ws, seed=3)
    for name in ("train", "val", "test"):
        assert [w.anchor_index for w in getattr(a, name)] == [w.anchor_index for w in getattr(b, name)]
    ids = [w.anchor_index for part in (a.train, a.val, a.test) for w in part]
    assert sorted(ids) == list(range(97))


@given(st.integers(1, 500), st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_split_sizes_within_one(n, seed):
    sp = split_random(_windows(n // 2, n - n // 2), seed=seed)
    sizes = sp.sizes()
    assert sum(sizes.values()) == n
    for name, frac in (("train", 0.7), ("val", 0.15), ("test", 0.15)):
        assert abs(sizes[name] - frac * n) <= 1 + 1e-9


def test_split_empty():
    with pytest.raises(InsufficientDataError):
        split_random([], seed=0)


def test_balance_undersamples_majority():
    out = balance(_windows(10, 90), seed=0)
    c = Counter(w.label for w in out)
    assert c[True] == 10 and c[False] == 10


def test_balance_already_balanced_keeps_multiset():
    ws = _windows(5, 5)
    out = balance(ws, seed=4)
    assert sorted(w.anchor_index for w in out) == list(range(10))


def test_balance_single_class():
    with pytest.raises(SingleClassError):
        balance(_windows(0, 9), seed=0)


@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 100))
@settings(max_examples=50, deadline=None)
def test_balance_is_subset_and_balanced(n_pos, n_neg, seed):
    ws = _windows(n_pos, n_neg)
    out = balance(ws, seed)
    keys = [w.anchor_index for w in out]
    assert len(set(keys)) == len(keys)
    assert set(keys) <= {w.anchor_index for w in ws}
    c = Counter(w.label for w in out)
    assert c[True] == c[False] == min(n_pos, n_neg)


def test_normalization_two_point():
    ws = [LabeledWindow(np.array([0.0]), False, 0), LabeledWindow(np.array([10.0]), True, 1)]
    st_ = fit_normalization(ws)
    assert (st_.mean_db, st_.std_db) == (5.0, 5.0)
    assert apply_normalization(ws[0], st_).features[0] == -1.0
    assert apply_normalization(ws[1], st_).features[0] == 1.0


def test_normalization_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_normalization([LabeledWindow(np.full(4, 5.0), False, 0)] * 3)


def test_normalized_training_set_is_standard():
    s = generate_synthetic(SynthParams(duration_s=300, seed=1))
    ws = make_windows(s, WindowSpec(1.0, 2.0, stride_samples=5))
    stats = fit_normalization(ws)
    X = np.concatenate([apply_normalization(w, stats).features for w in ws])
    assert abs(X.mean()) < 1e-9
    assert abs(X.std() - 1) < 1e-9


def test_build_split_contract():
    s = generate_synthetic(SynthParams(m_ln=0.0, sigma_ln=1.0, beta_inv_s=0.05, duration_s=2000, seed=5))
    ws = make_windows(s, WindowSpec(2.0, 3.0, stride_samples=4))
    sp = build_split(ws, seed=11)
    for part in (sp.train, sp.val):
        c = Counter(w.label for w in part)
        assert abs(c[True] - c[False]) <= 1
    groups = [{w.anchor_index for w in p} for p in (sp.train, sp.val, sp.test)]
    assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])
    X, _, _ = stack(sp.train)
    assert sp.norm.mean_db == pytest.approx(X.mean())
    # the test split keeps the natural class ratio (expected value equality)
    natural = np.mean([w.label for w in ws])
    test_ratio = np.mean([w.label for w in sp.test])
    assert test_ratio == pytest.approx(natural, abs=4 * np.sqrt(natural * (1 - natural) / len(sp.test)))


def test_test_split_ratio_is_unbiased_over_seeds():
    ws = _windows(200, 800)
    n_rep = 1000
    ratios = [np.mean([w.label for w in split_random(ws, seed=k).test]) for k in range(n_rep)]
    # hypergeometric standard error of one draw of 150 out of 1000
    se = np.sqrt(0.2 * 0.8 / 150 * (1000 - 150) / 999) / np.sqrt(n_rep)
    assert np.mean(ratios) == pytest.approx(0.2, abs=4 * se)


def test_rain_scarcity_on_qv_like_series():
    # P[a > 15 dB] of a few percent, as for the temperate Q/V link
    s = generate_synthetic(SynthParams(m_ln=-0.5, sigma_ln=1.6, beta_inv_s=1 / 600, duration_s=4e5, seed=1))
    analytic = SynthParams(m_ln=-0.5, sigma_ln=1.6).exceedance_probability(15.0)
    assert 0.01 < analytic < 0.05
    assert s.exceedance(15.0) == pytest.approx(analytic, abs=0.015)


def test_export_import_round_trip(tmp_path):
    s = generate_synthetic(SynthParams(duration_s=400, beta_inv_s=0.05, seed=2))
    spec = WindowSpec(1.0, 2.0, stride_samples=7)
    sp = build_split(make_windows(s, spec), seed=3)
    export_dataset(sp, tmp_path / "ds", spec, 3, s.sample_rate_hz)
    back, meta = load_dataset(tmp_path / "ds")
    assert meta["spec"] == spec.to_dict() and meta["window_len"] == 41
    assert back.norm == sp.norm
    for name in ("train", "val", "test"):
        a, b = getattr(sp, name), getattr(back, name)
        assert [(w.anchor_index, w.label) for w in a] == [(w.anchor_index, w.label) for w in b]
        np.testing.assert_array_equal(stack(a)[0], stack(b)[0])
