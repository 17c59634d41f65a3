from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oobad.dataset import DatasetError, SchemaConfig
from oobad.evaluation import (
    LabeledScores,
    copy_rows,
    filter_top_percent,
    load_labeled_csv,
    parse_binary_labels,
    repeated_auc,
    roc_auc,
)
from oobad.forest import ForestConfig
from oobad.scoring import AnomalyReport, score_dataset
from oobad.synthetic import planted_mixed

from conftest import benchmark_path, numerical
from oobad.dataset import Dataset


def pairwise_auc(scores, labels):
    """Exact AUC by counting concordant (1) and tied (1/2) positive-negative pairs."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            total += 1 if p > n else Fraction(1, 2) if p == n else 0
    return total / (len(pos) * len(neg))


# roc_auc


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    scores, labels = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    assert roc_auc(scores, labels) == float(pairwise_auc(scores, labels)) == 0.75


def test_auc_accepts_labeled_scores():
    assert roc_auc(LabeledScores(np.array([0.2, 0.1]), np.array([1, 0]))) == 1.0


def test_auc_single_class_errors():
    with pytest.raises(ValueError, match="undefined"):
        roc_auc([0.1, 0.2], [1, 1])


def test_labeled_scores_validation():
    with pytest.raises(ValueError):
        LabeledScores(np.array([0.1, 0.2]), np.array([0, 2]))
    with pytest.raises(ValueError):
        LabeledScores(np.array([0.1]), np.array([0, 1]))


_labels = st.lists(st.integers(0, 1), min_size=2, max_size=40).filter(lambda l: 0 < sum(l) < len(l))


@settings(max_examples=200, deadline=None)
@given(data=st.data(), labels=_labels)
def test_auc_matches_pairwise_counting(data, labels):
    scores = data.draw(st.lists(st.integers(0, 5).map(float), min_size=len(labels), max_size=len(labels)))
    assert roc_auc(scores, labels) == float(pairwise_auc(scores, labels))


@settings(max_examples=200, deadline=None)
@given(data=st.data(), labels=_labels)
def test_auc_antisymmetry_and_monotone_invariance(data, labels):
    scores = data.draw(
        st.lists(st.integers(-1000, 1000), min_size=len(labels), max_size=len(labels), unique=True)
    )
    s = np.array(scores, dtype=float)
    assert roc_auc(s, labels) + roc_auc(-s, labels) == pytest.approx(1.0, abs=1e-12)
    assert roc_auc(3 * s**3 + s + 7, labels) == roc_auc(s, labels)


# filter_top_percent


def _report(total):
    total = np.asarray(total, dtype=float)
    return AnomalyReport(np.arange(len(total)), total, total[:, None], ("s",), ())


def _dataset(n):
    return Dataset((numerical("a", np.arange(n) + 0.5), numerical("b", np.arange(n) * 2.0)))


def test_filter_zero():
    kept, removed = filter_top_percent(_dataset(5), _report([1, 2, 3, 4, 5]), 0.0)
    assert removed == [] and kept.n_rows == 5


def test_filter_rounds_up():
    _, removed = filter_top_percent(_dataset(10), _report(np.arange(10)), 0.15)
    assert len(removed) == 2


def test_filter_top_two():
    kept, removed = filter_top_percent(_dataset(4), _report([5, 1, 4, 2]), 0.5)
    assert set(removed) == {0, 2}
    np.testing.assert_array_equal(kept.row_ids, [1, 3])


def test_filter_ties_remove_lower_index_first():
    _, removed = filter_top_percent(_dataset(4), _report([1, 3, 3, 3]), 0.5)
    assert removed == [1, 2]


def test_filter_rejects_pct_one():
    with pytest.raises(ValueError):
        filter_top_percent(_dataset(4), _report([1, 2, 3, 4]), 1.0)


@settings(max_examples=100, deadline=None)
@given(
    total=st.lists(st.integers(0, 6).map(float), min_size=2, max_size=40),
    pct=st.floats(0.0, 0.99),
)
def test_filter_partition_property(total, pct):
    n = len(total)
    kept, removed = filter_top_percent(_dataset(n), _report(total), pct)
    assert kept.n_rows + len(removed) == n
    kept_scores = [total[i] for i in kept.row_ids]
    if removed and kept_scores:
        assert min(total[i] for i in removed) >= max(kept_scores)
    assert list(kept.row_ids) == sorted(kept.row_ids)


# repeated_auc


def test_repeated_auc_single_run():
    planted = planted_mixed(n_rows=150, seed=0)
    labels = np.zeros(150, dtype=int)
    labels[planted.planted] = 1
    cfg = ForestConfig(n_trees=40, seed=5)
    mean, aucs = repeated_auc(planted.dataset, labels, cfg, repeats=1)
    assert len(aucs) == 1 and mean == aucs[0]
    assert aucs[0] == roc_auc(score_dataset(planted.dataset, cfg).total, labels)


def test_repeated_auc_seeds_and_validation():
    planted = planted_mixed(n_rows=120, seed=1)
    labels = np.zeros(120, dtype=int)
    labels[planted.planted] = 1
    cfg = ForestConfig(n_trees=20, seed=3)
    mean, aucs = repeated_auc(planted.dataset, labels, cfg, repeats=3)
    assert aucs[2] == roc_auc(score_dataset(planted.dataset, ForestConfig(n_trees=20, seed=5)).total, labels)
    assert mean == pytest.approx(np.mean(aucs))
    with pytest.raises(ValueError):
        repeated_auc(planted.dataset, labels, cfg, repeats=0)
    with pytest.raises(ValueError):
        repeated_auc(planted.dataset, labels[:-1], cfg)


@pytest.mark.slow
def test_auc_spread_shrinks_with_more_trees():
    path = benchmark_path("glass.csv")
    if not path.is_file():
        pytest.skip("glass.csv not built (scripts/build_benchmarks.py)")
    dataset, labels = load_labeled_csv(path, "label")
    _, small = repeated_auc(dataset, labels, ForestConfig(n_trees=50), repeats=8)
    _, large = repeated_auc(dataset, labels, ForestConfig(n_trees=500), repeats=8)
    assert np.std(large) < np.std(small)


# label handling and row copying


def test_parse_binary_labels():
    np.testing.assert_array_equal(parse_binary_labels(["0", "1", "1.0", "0.0"]), [0, 1, 1, 0])
    with pytest.raises(DatasetError, match=r"'2'"):
        parse_binary_labels(["0", "1", "2"])
    with pytest.raises(DatasetError, match="yes"):
        parse_binary_labels(["yes", "0"])


def test_load_labeled_csv_excludes_label(write_csv):
    p = write_csv("a,b,y\n1.5,2.5,0\n2.5,3.5,1\n3.5,1.5,0\n")
    ds, labels = load_labeled_csv(p, "y")
    assert ds.names == ["a", "b"]
    np.testing.assert_array_equal(labels, [0, 1, 0])
    with pytest.raises(DatasetError):
        load_labeled_csv(p, "missing")


def test_labels_follow_dropped_rows(write_csv):
    p = write_csv("a,b,y\n1.5,2.5,0\n2.5,,1\n3.5,1.5,1\n4.5,0.5,0\n")
    ds, labels = load_labeled_csv(p, "y", SchemaConfig(missing_value_policy="drop_rows"))
    np.testing.assert_array_equal(labels, [0, 1, 0])


def test_copy_rows_is_byte_exact(write_csv, tmp_path):
    text = 'a,b\r\n"x, y",1.50\r\n\r\nz,2\r\n"q\nr",3\r\n'
    src = write_csv(text)
    dst = tmp_path / "out.csv"
    copy_rows(src, dst, [0, 1, 2])
    assert dst.read_bytes() == src.read_bytes().replace(b"\r\n\r\n", b"\r\n")
    copy_rows(src, dst, [2])
    assert dst.read_bytes() == b'a,b\r\n"q\nr",3\r\n'
