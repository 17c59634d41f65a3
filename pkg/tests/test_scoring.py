import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oobad.dataset import Dataset
from oobad.forest import ForestConfig, OOBPredictionSet, fit_forest, oob_predictions
from oobad.dataset import split_features
from oobad.scoring import (
    NoOOBModels,
    categorical_disagreement,
    categorical_uncertainty,
    entropy_bounds,
    fit_forests,
    minmax_scale,
    numerical_score,
    score_dataset,
    score_feature,
    score_oob,
)
from oobad.synthetic import planted_mixed

from conftest import categorical, copy_dataset, numerical

A, B = 0, 1

# oracles


def entropy_oracle(labels):
    n = len(labels)
    h = 0.0
    for v in set(labels):
        p = labels.count(v) / n
        h -= p * math.log(p)
    return h


# categorical_uncertainty / disagreement


def test_uncertainty_examples():
    assert categorical_uncertainty([A, A, A, A], 2) == 0.0
    assert categorical_uncertainty([A, B], 2) == pytest.approx(1.0, abs=1e-15)
    assert categorical_uncertainty([A, A, B, B], 3) == pytest.approx(entropy_oracle([A, A, B, B]) / math.log(3), abs=1e-12)
    assert categorical_uncertainty([A, A, B, B], 3) == pytest.approx(0.6309, abs=1e-4)


def test_disagreement_examples():
    assert categorical_disagreement([A, A, B, B], A) == 0.5
    assert categorical_disagreement([A, A, A], A) == 0.0
    assert categorical_disagreement([A, A, A], B) == 1.0


def test_empty_predictions_signal_no_models():
    with pytest.raises(NoOOBModels):
        categorical_uncertainty([], 2)
    with pytest.raises(NoOOBModels):
        categorical_disagreement([], 0)
    with pytest.raises(NoOOBModels):
        numerical_score([], 1.0)


@settings(max_examples=200, deadline=None)
@given(c=st.integers(2, 6), data=st.data())
def test_categorical_ranges(c, data):
    preds = data.draw(st.lists(st.integers(0, c - 1), min_size=1, max_size=50))
    obs = data.draw(st.integers(0, c - 1))
    u = categorical_uncertainty(preds, c)
    d = categorical_disagreement(preds, obs)
    assert -1e-12 <= u <= 1 + 1e-12 and 0 <= d <= 1
    assert u == pytest.approx(entropy_oracle(preds) / math.log(c), abs=1e-12)


# numerical_score


def test_numerical_examples():
    assert numerical_score([2, 4], 3) == (1.0, 0.0)
    assert numerical_score([5, 5], 3) == (0.0, 4.0)
    assert numerical_score([1.25, 1.25, 1.25], 1.25) == (0.0, 0.0)


@settings(max_examples=300, deadline=None)
@given(
    preds=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
    obs=st.floats(-1e3, 1e3),
)
def test_numerical_decomposition(preds, obs):
    u, d = numerical_score(preds, obs)
    mse = sum((p - obs) ** 2 for p in preds) / len(preds)
    assert u >= 0 and d >= 0
    assert math.isclose(u + d, mse, rel_tol=1e-9, abs_tol=1e-9)


# minmax_scale


def test_minmax_examples():
    np.testing.assert_array_equal(minmax_scale([2, 4, 6]), [0, 0.5, 1])
    np.testing.assert_array_equal(minmax_scale([5, 5, 5]), [0, 0, 0])
    np.testing.assert_array_equal(minmax_scale([7]), [0])
    assert minmax_scale([]).size == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_minmax_hits_endpoints(raw):
    s = minmax_scale(raw)
    assert ((s >= 0) & (s <= 1)).all()
    if max(raw) > min(raw):
        assert s.min() == 0.0 and s.max() == 1.0
    else:
        assert (s == 0).all()


# entropy_bounds


def test_entropy_bounds_examples():
    assert entropy_bounds(1.0, 5) == (0.0, 0.0)
    lo, hi = entropy_bounds(0.5, 2)
    assert lo == pytest.approx(math.log(2)) and hi == pytest.approx(math.log(2))
    lo, hi = entropy_bounds(0.0, 3)
    assert lo == 0.0 and hi == pytest.approx(math.log(2), abs=1e-15)


def test_entropy_bounds_invalid():
    with pytest.raises(ValueError):
        entropy_bounds(1.5, 2)
    with pytest.raises(ValueError):
        entropy_bounds(0.5, 1)


@settings(max_examples=300, deadline=None)
@given(c=st.integers(2, 8), data=st.data())
def test_entropy_within_bounds(c, data):
    preds = data.draw(st.lists(st.integers(0, c - 1), min_size=1, max_size=40))
    obs = data.draw(st.integers(0, c - 1))
    p = preds.count(obs) / len(preds)
    lo, hi = entropy_bounds(p, c)
    h = entropy_oracle(preds)
    assert lo - 1e-9 <= h <= hi + 1e-9
    if c == 2:
        assert lo == pytest.approx(hi, abs=1e-12)


# score_oob (vectorised) against the scalar operations


@pytest.mark.parametrize("cardinality", [None, 3])
def test_vectorised_matches_scalar(cardinality):
    rng = np.random.default_rng(0)
    t, n = 25, 40
    if cardinality:
        preds = rng.integers(0, cardinality, size=(t, n)).astype(float)
        observed = rng.integers(0, cardinality, size=n)
    else:
        preds = rng.normal(size=(t, n))
        observed = rng.normal(size=n)
    mask = rng.random((t, n)) < 0.4
    mask[:, 0] = False
    oob = OOBPredictionSet(preds, mask, cardinality or 0)
    u, d = score_oob(oob, observed, cardinality)
    assert u[0] == 0.0 and d[0] == 0.0
    for i in range(1, n):
        p = oob.for_row(i)
        if len(p) == 0:
            continue
        if cardinality:
            su, sd = categorical_uncertainty(p, cardinality), categorical_disagreement(p, observed[i])
        else:
            su, sd = numerical_score(p, observed[i])
        assert u[i] == pytest.approx(su, abs=1e-12)
        assert d[i] == pytest.approx(sd, abs=1e-12)


# score_feature


@pytest.fixture(scope="module")
def copy_scores():
    ds = copy_dataset()
    return ds, score_feature(ds, 1, ForestConfig())


def test_copy_column_is_predictable(copy_scores):
    _, col = copy_scores
    assert np.median(col.disagreement) < 0.1
    assert np.median(col.uncertainty) < 0.3


def test_feature_score_invariants(copy_scores):
    _, col = copy_scores
    np.testing.assert_allclose(col.raw, col.uncertainty + col.disagreement, atol=1e-9)
    assert (col.raw >= 0).all() and (col.raw <= 2).all()
    if np.ptp(col.raw) > 0:
        assert col.scaled.min() == 0.0 and col.scaled.max() == 1.0
    else:
        assert (col.scaled == 0).all()
    assert col.warnings == ()


def test_flipped_row_gets_max_score():
    base = copy_dataset()
    codes = base.column("b").data.copy()
    codes[17] = 1 - codes[17]
    ds = Dataset((base.columns[0], categorical("b", codes, 2)))
    col = score_feature(ds, 1, ForestConfig())
    assert col.scaled[17] == 1.0


def test_no_oob_rows_score_zero_with_warning():
    rng = np.random.default_rng(0)
    ds = Dataset((numerical("a", rng.normal(size=30)), numerical("b", rng.normal(size=30))))
    col = score_feature(ds, 0, ForestConfig(n_trees=1))
    empty = np.flatnonzero(col.oob_counts == 0)
    assert len(empty) > 0
    assert (col.raw[empty] == 0).all()
    assert [r for r, _ in col.warnings] == list(empty)


def test_reuse_forest():
    ds = copy_dataset(60)
    target, preds = split_features(ds, 0)
    forest = fit_forest(preds, target, ForestConfig(n_trees=30), stream=0)
    a = score_feature(ds, 0, ForestConfig(n_trees=30))
    b = score_feature(ds, 0, ForestConfig(), forest=forest)
    np.testing.assert_array_equal(a.scaled, b.scaled)


# score_dataset


def test_mutual_copies_range_bound():
    report = score_dataset(copy_dataset(), ForestConfig(n_trees=100))
    assert report.total.max() <= 2.0
    assert np.median(report.total) == report.total.min()


def test_planted_outlier_ranks_first():
    rng = np.random.default_rng(5)
    x = rng.normal(size=200)
    y = x.copy()
    y[42] = 100 * y.max()
    ds = Dataset((numerical("x", x), numerical("y", y)))
    report = score_dataset(ds, ForestConfig())
    assert report.ranking()[0] == 42


def test_determinism_bit_identical():
    data = planted_mixed(n_rows=150, seed=1).dataset
    a = score_dataset(data, ForestConfig(n_trees=50, seed=3), threads=1)
    b = score_dataset(data, ForestConfig(n_trees=50, seed=3), threads=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_report_invariants_and_entropy_containment():
    data = planted_mixed(n_rows=200, seed=2).dataset
    report = score_dataset(data, ForestConfig(n_trees=100))
    np.testing.assert_allclose(report.total, report.scaled.sum(axis=1), atol=1e-9)
    assert (report.total >= 0).all() and (report.total <= data.n_columns).all()
    for f in report.features:
        assert f.scaled.min() == 0.0 and f.scaled.max() == 1.0
        if f.is_categorical:
            assert (f.uncertainty >= 0).all() and (f.uncertainty <= 1 + 1e-12).all()
            h, p = f.entropy(), f.observed_mass()
            for i in range(data.n_rows):
                lo, hi = entropy_bounds(p[i], f.cardinality)
                assert lo - 1e-9 <= h[i] <= hi + 1e-9


def test_aggregation_is_permutation_equivariant():
    rng = np.random.default_rng(0)
    raw = rng.gamma(2.0, size=(50, 4))
    perm = rng.permutation(50)
    scaled = np.column_stack([minmax_scale(raw[:, k]) for k in range(4)])
    scaled_p = np.column_stack([minmax_scale(raw[perm, k]) for k in range(4)])
    np.testing.assert_array_equal(scaled_p, scaled[perm])
    np.testing.assert_array_equal(scaled_p.sum(axis=1), scaled[perm].sum(axis=1))
    # the OOB statistics are per-row too
    preds = rng.normal(size=(20, 50))
    mask = rng.random((20, 50)) < 0.4
    obs = rng.normal(size=50)
    u, d = score_oob(OOBPredictionSet(preds, mask, 0), obs, None)
    up, dp = score_oob(OOBPredictionSet(preds[:, perm], mask[:, perm], 0), obs[perm], None)
    np.testing.assert_array_equal(up, u[perm])
    np.testing.assert_array_equal(dp, d[perm])


def test_reusing_forests_matches_fresh_fit():
    data = planted_mixed(n_rows=120, seed=0).dataset
    cfg = ForestConfig(n_trees=30)
    forests = fit_forests(data, cfg)
    assert score_dataset(data, cfg, forests=forests).to_csv() == score_dataset(data, cfg).to_csv()
    with pytest.raises(ValueError):
        score_dataset(data, cfg, forests=forests[:2])


def test_report_serialisation():
    ds = copy_dataset(40)
    report = score_dataset(ds, ForestConfig(n_trees=20))
    lines = report.to_csv().splitlines()
    assert lines[0] == "row_id,total_score,a,b"
    assert len(lines) == 41
    sorted_ids = [int(l.split(",")[0]) for l in report.to_csv(sort=True).splitlines()[1:]]
    totals = [report.total[i] for i in sorted_ids]
    assert totals == sorted(totals, reverse=True)
    d = report.to_dict()
    assert d["config"]["n_trees"] == 20
    assert [f["kind"] for f in d["features"]] == ["categorical", "categorical"]
    assert len(d["rows"]) == 40
