"""Binary-classification metrics and the kernel two-sample distance diagnostic.

Precision, recall, F1 and accuracy come from explicit confusion counts.
ROC/AUC uses the midrank statistic, which equals the trapezoidal area under
the ROC curve with tied scores averaged. The maximum mean discrepancy uses
a Gaussian kernel with the median-distance heuristic by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    """Confusion counts plus the derived rates for one evaluation.

    ``degenerate`` is set when a zero denominator forced precision, recall
    or F1 to 0. ``auc`` stays None unless filled in from ``roc_auc``.
    """

    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class: int
    degenerate: bool = False
    auc: float | None = None

    def to_json_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "accuracy": self.accuracy, "auc": self.auc,
                "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}}


def format_percent(x: float) -> str:
    """Render a rate as a percentage with one decimal, e.g. 0.75006 -> '75.0'."""
    return f"{100.0 * x:.1f}"


def compute_prf(predictions, labels, positive_class: int = 1) -> MetricsReport:
    """Precision, recall, F1 and accuracy from predicted and true labels."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(f"predictions {predictions.shape} and labels {labels.shape} "
                         "must be equal-length 1-D arrays")
    if len(predictions) == 0:
        raise ValueError("cannot compute metrics on empty input")
    pred_pos = predictions == positive_class
    true_pos = labels == positive_class
    tp = int(np.sum(pred_pos & true_pos))
    fp = int(np.sum(pred_pos & ~true_pos))
    fn = int(np.sum(~pred_pos & true_pos))
    tn = int(np.sum(~pred_pos & ~true_pos))

    degenerate = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    accuracy = (tp + tn) / len(predictions)
    return MetricsReport(precision, recall, f1, accuracy, tp, fp, tn, fn,
                         positive_class, degenerate)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the midrank statistic.

    Equivalent to the fraction of (positive, negative) pairs where the
    positive sample scores higher, counting ties as one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D arrays")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc is undefined when only one class is present")

    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    # midranks: tied scores all receive the average of their 1-based ranks
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[pos].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores, labels):
    """ROC curve as (fpr, tpr, threshold) rows, thresholds descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC is undefined when only one class is present")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    order = np.argsort(-scores, kind="stable")
    i = 0
    while i < len(order):
        j = i
        threshold = scores[order[i]]
        while j + 1 < len(order) and scores[order[j + 1]] == threshold:
            j += 1
        block = order[i:j + 1]
        tp += int(pos[block].sum())
        fp += len(block) - int(pos[block].sum())
        points.append((fp / n_neg, tp / n_pos, float(threshold)))
        i = j + 1
    return points


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def mmd(features_a, features_b, bandwidth="median", unbiased=False) -> float:
    """Squared maximum mean discrepancy with a Gaussian kernel.

    ``bandwidth="median"`` uses the median pairwise distance over the pooled
    sample; a positive float fixes it explicitly. The biased estimator is
    nonnegative by construction; the unbiased one needs at least two samples
    per side and may be negative.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature widths differ: {a.shape} vs {b.shape}")
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("mmd requires nonempty samples")
    if unbiased and (n < 2 or m < 2):
        raise ValueError("unbiased mmd requires at least 2 samples per side")

    d_aa = _sqdist(a, a)
    d_bb = _sqdist(b, b)
    d_ab = _sqdist(a, b)
    if bandwidth == "median":
        # the pooled-sample upper triangle is exactly the three blocks
        upper = np.concatenate([d_aa[np.triu_indices(n, k=1)],
                                d_ab.reshape(-1),
                                d_bb[np.triu_indices(m, k=1)]])
        bw = float(np.sqrt(np.median(upper)))
    else:
        bw = float(bandwidth)
        if bw <= 0:
            raise ValueError(f"bandwidth must be positive, got {bw}")
    denom = max(2.0 * bw * bw, 1e-300)
    k_aa = np.exp(-d_aa / denom)
    k_bb = np.exp(-d_bb / denom)
    k_ab = np.exp(-d_ab / denom)

    if unbiased:
        np.fill_diagonal(k_aa, 0.0)
        np.fill_diagonal(k_bb, 0.0)
        return (k_aa.sum() / (n * (n - 1)) + k_bb.sum() / (m * (m - 1))
                - 2.0 * k_ab.mean())
    value = k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean()
    return max(value, 0.0)
