import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowmarket.detection.evaluation import (metrics_from_scores, roc_auc, roc_curve,
                                               row_percentages)

from oracles import mann_whitney_auc


def test_perfect_classifier():
    y = np.array([1, 1, -1, -1])
    m = metrics_from_scores(y, [2.0, 1.0, -1.0, -3.0])
    assert (m.accuracy, m.f1, m.auc) == (1.0, 1.0, 1.0)
    assert m.confusion == ((100.0, 0.0), (0.0, 100.0))


def test_inverted_classifier():
    m = metrics_from_scores([1, 1, -1, -1], [-2.0, -1.0, 1.0, 3.0])
    assert m.accuracy == 0.0 and m.auc == 0.0 and m.f1 == 0.0


def test_random_scores_auc_near_half():
    rng = np.random.default_rng(42)
    y = np.repeat([1, -1], 500)
    auc = roc_auc(y, rng.random(1000))
    assert 0.45 <= auc <= 0.55


def test_zero_score_counts_as_suspicious():
    m = metrics_from_scores([1, -1], [0.0, -0.5])
    assert m.accuracy == 1.0


def test_single_class_auc_undefined():
    assert roc_auc([1, 1, 1], [0.1, 0.2, 0.3]) is None
    assert metrics_from_scores([-1, -1], [0.3, -0.2]).auc is None


def test_roc_curve_ties_grouped():
    fpr, tpr, thr = roc_curve([1, -1, 1, -1], [0.5, 0.5, 0.2, 0.1])
    assert fpr.tolist() == [0.0, 0.5, 0.5, 1.0]
    assert tpr.tolist() == [0.0, 0.5, 1.0, 1.0]
    assert thr[0] == np.inf


def test_f1_by_hand():
    # tp=2 fn=1 fp=1 tn=2
    y = [1, 1, 1, -1, -1, -1]
    s = [1, 1, -1, 1, -1, -1]
    m = metrics_from_scores(y, s)
    assert m.counts == ((2, 1), (1, 2))
    assert m.f1 == pytest.approx(2 * 2 / (2 * 2 + 1 + 1))
    assert m.accuracy == pytest.approx(4 / 6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(-5, 5)), min_size=2, max_size=60))
def test_auc_equals_mann_whitney(rows):
    y = np.array([1 if p else -1 for p, _ in rows])
    if y.min() == y.max():
        return
    s = np.array([float(v) for _, v in rows])  # small integer range forces ties
    assert abs(roc_auc(y, s) - mann_whitney_auc(y, s)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=4))
def test_confusion_rows_sum_to_100(counts):
    for a, b in row_percentages(counts):
        assert a + b == pytest.approx(100.0, abs=0.1) or a + b == 0.0
