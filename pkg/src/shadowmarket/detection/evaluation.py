"""Accuracy, F1, ROC/AUC and the row-normalised confusion matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .svm import TrainedModel


@dataclass(frozen=True)
class EvalMetrics:
    # rows are the true class, columns the predicted class, each row in percent:
    # [[suspicious->suspicious, suspicious->legitimate],
    #  [legitimate->suspicious, legitimate->legitimate]]
    confusion: tuple[tuple[float, float], tuple[float, float]]
    counts: tuple[tuple[int, int], tuple[int, int]]
    accuracy: float
    f1: float
    auc: float | None  # None when the test set holds a single class

    def as_dict(self) -> dict:
        return {"confusion_pct": [list(r) for r in self.confusion],
                "confusion_counts": [list(r) for r in self.counts],
                "accuracy": self.accuracy, "f1": self.f1, "auc": self.auc}


def confusion_counts(y_true, y_pred) -> tuple[tuple[int, int], tuple[int, int]]:
    t = np.asarray(y_true) > 0
    p = np.asarray(y_pred) > 0
    return ((int(np.sum(t & p)), int(np.sum(t & ~p))),
            (int(np.sum(~t & p)), int(np.sum(~t & ~p))))


def row_percentages(counts) -> tuple[tuple[float, float], tuple[float, float]]:
    rows = []
    for a, b in counts:
        n = a + b
        rows.append((100.0 * a / n, 100.0 * b / n) if n else (0.0, 0.0))
    return tuple(rows)  # type: ignore[return-value]


def roc_curve(y_true, scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds), one point per distinct score plus the origin."""
    y = np.asarray(y_true) > 0
    s = np.asarray(scores, dtype=float)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    tpr = np.r_[0.0, tp / n_pos] if n_pos else np.zeros(ends.size + 1)
    fpr = np.r_[0.0, fp / n_neg] if n_neg else np.zeros(ends.size + 1)
    return fpr, tpr, np.r_[np.inf, s[ends]]


def roc_auc(y_true, scores) -> float | None:
    """Trapezoidal area under the ROC curve; ``None`` for single-class input."""
    y = np.asarray(y_true) > 0
    if y.all() or not y.any():
        return None
    fpr, tpr, _ = roc_curve(y_true, scores)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def metrics_from_scores(y_true, scores) -> EvalMetrics:
    y = np.where(np.asarray(y_true) > 0, 1, -1)
    s = np.asarray(scores, dtype=float)
    if y.size == 0:
        raise ValueError("empty test set")
    pred = np.where(s >= 0, 1, -1)
    counts = confusion_counts(y, pred)
    (tp, fn), (fp, tn) = counts
    denom = 2 * tp + fp + fn
    return EvalMetrics(
        confusion=row_percentages(counts),
        counts=counts,
        accuracy=(tp + tn) / y.size,
        f1=2 * tp / denom if denom else 0.0,
        auc=roc_auc(y, s),
    )


def evaluate(model: TrainedModel, X_test, y_test) -> EvalMetrics:
    return metrics_from_scores(y_test, model.decision_function(X_test))
