import warnings

import numpy as np
import pytest

from gaga.metrics import MetricError, Metrics, auc, average_precision, compute_metrics, f1_scores

EPS = 1e-12


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert abs(auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) - 0.75) < EPS


def test_auc_half_credit_for_ties():
    # pairs: (0.5 vs 0.5) tie, (0.5 vs 0.2) win -> (0.5 + 1) / 2
    assert abs(auc([0.5, 0.5, 0.2], [1, 0, 0]) - 0.75) < EPS


def test_auc_matches_pair_enumeration(rng):
    s = np.round(rng.random(60), 1)
    y = (rng.random(60) < 0.3).astype(int)
    pos, neg = s[y == 1], s[y == 0]
    pairs = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    assert abs(auc(s, y) - pairs / (len(pos) * len(neg))) < EPS


def test_auc_needs_both_classes():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [0, 2])
    with pytest.raises(MetricError):
        auc([0.1], [0, 1])


def test_average_precision_examples():
    assert average_precision([0.9, 0.8, 0.1, 0.05], [1, 1, 0, 0]) == 1.0
    for j in range(1, 6):
        labels = [0] * 5
        labels[j - 1] = 1
        scores = -np.arange(5.0)
        assert abs(average_precision(scores, labels) - 1.0 / j) < EPS
    assert abs(average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) - (1 / 2 + (2 / 3) / 2)) < EPS


def test_average_precision_tie_break_is_by_index():
    # equal scores: node 0 ranks before node 1
    assert average_precision([0.5, 0.5], [1, 0]) == 1.0
    assert average_precision([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(MetricError):
        average_precision([0.3, 0.2], [0, 0])


def test_f1_examples():
    assert f1_scores([0.9, 0.1, 0.8], [1, 0, 1]) == (1.0, 1.0, 1.0)
    with pytest.warns(RuntimeWarning):
        f_fraud, f_benign, _ = f1_scores([0.1, 0.2, 0.3], [1, 0, 0])
    assert f_fraud == 0.0 and f_benign == pytest.approx(0.8, abs=EPS)
    # TP=3, FP=1, FN=1, TN=5
    scores = [0.9] * 3 + [0.9] + [0.1] + [0.1] * 5
    labels = [1] * 3 + [0] + [1] + [0] * 5
    f_fraud, f_benign, f_macro = f1_scores(scores, labels)
    assert abs(f_fraud - 0.75) < EPS
    assert abs(f_benign - 10 / 12) < EPS
    assert abs(f_macro - (0.75 + 10 / 12) / 2) < EPS
    assert round(f_macro, 4) == 0.7917


def test_f1_threshold_is_strict():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert f1_scores([0.5, 0.6], [0, 1]) == (1.0, 1.0, 1.0)


def test_compute_metrics_and_text():
    m = compute_metrics([0.2, 0.7, 0.6, 0.1], [0, 1, 1, 0])
    assert isinstance(m, Metrics)
    assert (m.auc, m.ap, m.f1_macro, m.threshold) == (1.0, 1.0, 1.0, 0.5)
    assert m.to_text().splitlines()[0] == "auc=1.0"
    assert m.csv_header() == "auc,ap,f1_macro,f1_fraud,f1_benign,threshold"
    assert m.csv_row() == "1.0,1.0,1.0,1.0,1.0,0.5"


def test_permuted_labels_give_chance_auc(rng):
    scores = rng.random(2000)
    labels = (rng.random(2000) < 0.5).astype(int)
    assert abs(auc(scores, rng.permutation(labels)) - 0.5) < 0.05
