"""Confusion matrices and per-class / aggregate classification metrics.

All quantities derive exactly from integer counts: precision, recall,
F1, one-vs-rest accuracy per class, overall accuracy, macro and micro
averages. Zero-denominator cases are defined as 0 and flagged instead
of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CLASS_NAMES, N_CLASSES
from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (3, 3); rows = true class, columns = predicted

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (N_CLASSES, N_CLASSES) or (c < 0).any():
            raise DataError("confusion matrix must be 3x3 nonnegative counts")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def true_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def predicted_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    ovr_accuracy: float
    degenerate: bool


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple
    overall_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_recall: float
    total: int


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    """Entry (i, j) counts samples with true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError("y_true and y_pred must be equal-length 1-d vectors")
    for name, v in (("y_true", y_true), ("y_pred", y_pred)):
        if v.size and (v.min() < 0 or v.max() >= N_CLASSES):
            raise DataError(f"{name} holds labels outside [0, {N_CLASSES})")
    flat = np.bincount(y_true * N_CLASSES + y_pred, minlength=N_CLASSES * N_CLASSES)
    return ConfusionMatrix(flat.reshape(N_CLASSES, N_CLASSES))


def _ratio(num: int, den: int):
    # zero denominator is defined as 0 and reported degenerate
    return (num / den, False) if den > 0 else (0.0, True)


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise DataError("cannot compute metrics of an empty confusion matrix")
    per_class = []
    tp_sum = 0
    for c in range(N_CLASSES):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        tn = total - tp - fp - fn
        precision, d1 = _ratio(tp, tp + fp)
        recall, d2 = _ratio(tp, tp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class.append(ClassMetrics(
            name=CLASS_NAMES[c],
            precision=precision,
            recall=recall,
            f1=f1,
            ovr_accuracy=(tp + tn) / total,
            degenerate=d1 or d2,
        ))
        tp_sum += tp
    return MetricsReport(
        per_class=tuple(per_class),
        overall_accuracy=tp_sum / total,
        macro_precision=sum(m.precision for m in per_class) / N_CLASSES,
        macro_recall=sum(m.recall for m in per_class) / N_CLASSES,
        macro_f1=sum(m.f1 for m in per_class) / N_CLASSES,
        micro_recall=tp_sum / total,  # denominators sum to the matrix total
        total=total,
    )
