import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskadapt.evaluation import (compute_prf, format_percent, mmd, roc_auc,
                                  roc_points)


def confusion_arrays(tp, fp, tn, fn):
    """Prediction/label arrays realizing the given confusion counts."""
    preds = np.concatenate([np.ones(tp + fp, dtype=int), np.zeros(tn + fn, dtype=int)])
    labels = np.concatenate([np.ones(tp, dtype=int), np.zeros(fp, dtype=int),
                             np.zeros(tn, dtype=int), np.ones(fn, dtype=int)])
    return preds, labels


def brute_force_prf(preds, labels, positive=1):
    tp = sum(1 for p, l in zip(preds, labels) if p == positive and l == positive)
    fp = sum(1 for p, l in zip(preds, labels) if p == positive and l != positive)
    fn = sum(1 for p, l in zip(preds, labels) if p != positive and l == positive)
    tn = len(preds) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1, (tp + tn) / len(preds)


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# precision / recall / F1

def test_published_operating_point_one():
    # P = 1412/2000 = 0.706 and R = 1412/1765 = 0.800 exactly
    preds, labels = confusion_arrays(tp=1412, fp=588, tn=100, fn=353)
    report = compute_prf(preds, labels)
    assert format_percent(report.precision) == "70.6"
    assert format_percent(report.recall) == "80.0"
    assert format_percent(report.f1) == "75.0"


def test_published_operating_point_two():
    # P = 920/1000 = 0.920 and R = 920/928.1... use exact fractions:
    # choose tp=9200, fp=800 -> P=0.92; fn chosen so R=0.991 within rounding
    preds, labels = confusion_arrays(tp=9200, fp=800, tn=50, fn=84)
    report = compute_prf(preds, labels)
    assert format_percent(report.precision) == "92.0"
    assert format_percent(report.recall) == "99.1"
    assert format_percent(report.f1) == "95.4"


def test_all_correct_is_perfect():
    preds, labels = confusion_arrays(tp=5, fp=0, tn=7, fn=0)
    report = compute_prf(preds, labels)
    assert report.precision == report.recall == report.f1 == report.accuracy == 1.0
    assert not report.degenerate


def test_degenerate_flags():
    report = compute_prf([0, 0], [1, 1])
    assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0
    assert report.degenerate


def test_counts_sum_and_json_schema():
    preds, labels = confusion_arrays(3, 2, 4, 1)
    report = compute_prf(preds, labels)
    assert report.tp + report.fp + report.tn + report.fn == len(preds)
    doc = report.to_json_dict()
    assert set(doc) == {"precision", "recall", "f1", "accuracy", "auc", "confusion"}
    assert set(doc["confusion"]) == {"tp", "fp", "tn", "fn"}


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        compute_prf([], [])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10_000), st.integers(0, 2 ** 31))
def test_prf_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    preds = rng.integers(0, 2, size=n)
    labels = rng.integers(0, 2, size=n)
    report = compute_prf(preds, labels)
    p, r, f1, acc = brute_force_prf(preds.tolist(), labels.tolist())
    assert report.precision == pytest.approx(p, abs=1e-12)
    assert report.recall == pytest.approx(r, abs=1e-12)
    assert report.f1 == pytest.approx(f1, abs=1e-12)
    assert report.accuracy == pytest.approx(acc, abs=1e-12)


# ---------------------------------------------------------------------------
# ROC / AUC

def test_auc_four_point_case():
    assert roc_auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]) == pytest.approx(0.75, abs=1e-12)


def test_auc_perfect_separation():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


def test_auc_single_class_rejected():
    with pytest.raises(ValueError, match="one class"):
        roc_auc([0.5, 0.6], [1, 1])


def test_auc_random_scores_near_half():
    rng = np.random.default_rng(123)
    vals = []
    for _ in range(20):
        labels = rng.integers(0, 2, size=2000)
        scores = rng.uniform(size=2000)
        vals.append(roc_auc(scores, labels))
    assert abs(np.mean(vals) - 0.5) < 0.05


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 500), st.integers(0, 2 ** 31))
def test_auc_matches_pair_ordering_oracle(n, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    # quantized scores force ties through the midrank path
    scores = np.round(rng.uniform(size=n), 2)
    assert roc_auc(scores, labels) == pytest.approx(
        brute_force_auc(scores.tolist(), labels.tolist()), abs=1e-12)


def test_roc_points_trapezoid_equals_rank_statistic():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 2, size=200)
    labels[0], labels[1] = 0, 1
    scores = np.round(rng.uniform(size=200), 2)
    pts = roc_points(scores, labels)
    fpr = np.array([p[0] for p in pts])
    tpr = np.array([p[1] for p in pts])
    area = np.trapezoid(tpr, fpr)
    assert area == pytest.approx(roc_auc(scores, labels), abs=1e-12)
    assert pts[0][:2] == (0.0, 0.0) and pts[-1][:2] == (1.0, 1.0)


# ---------------------------------------------------------------------------
# maximum mean discrepancy

def test_mmd_identical_sets_is_zero():
    x = np.random.default_rng(0).normal(size=(20, 3))
    assert mmd(x, x) == 0.0


def test_mmd_two_point_masses_closed_form():
    # singleton samples separated far beyond a fixed bandwidth:
    # k(a,a) = k(b,b) = 1 and k(a,b) ~ 0, so the biased estimate -> 2
    a = np.array([[0.0, 0.0]])
    b = np.array([[100.0, 0.0]])
    val = mmd(a, b, bandwidth=1.0)
    expected = 1.0 + 1.0 - 2.0 * math.exp(-(100.0 ** 2) / 2.0)
    assert val == pytest.approx(expected, abs=1e-12)
    assert val == pytest.approx(2.0, abs=1e-12)


def test_mmd_row_permutation_invariance():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(30, 4))
    b = rng.normal(size=(25, 4))
    base = mmd(a, b)
    perm_a = rng.permutation(30)
    perm_b = rng.permutation(25)
    assert mmd(a[perm_a], b[perm_b]) == pytest.approx(base, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_mmd_biased_nonnegative(n, m, d, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, d))
    b = rng.normal(size=(m, d)) + rng.normal()
    assert mmd(a, b) >= 0.0


def test_mmd_unbiased_requires_two_per_side():
    with pytest.raises(ValueError, match="2 samples"):
        mmd(np.zeros((1, 2)), np.zeros((5, 2)), unbiased=True)


def test_mmd_estimators_agree_on_large_same_distribution_samples():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(400, 3))
    b = rng.normal(size=(400, 3))
    biased = mmd(a, b)
    unbiased = mmd(a, b, unbiased=True)
    assert abs(biased - unbiased) < 0.02  # O(1/n) gap


def test_mmd_width_mismatch_rejected():
    with pytest.raises(ValueError):
        mmd(np.zeros((3, 2)), np.zeros((3, 4)))
