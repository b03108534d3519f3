"""Evaluation metrics: confusion matrices, F1 scores, tie-aware AUC, 2-D projection.

AUC is the rank statistic (fraction of minority/majority score pairs ordered
correctly, ties counted half), which equals the trapezoidal area under the
ROC curve. The 2-D projection is principal-component based so plots and
tests stay deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, UndefinedMetricError

__all__ = [
    "ConfusionMatrix",
    "MetricsReport",
    "confusion",
    "precision_recall_f1",
    "macro_f1",
    "micro_f1",
    "accuracy",
    "roc_auc",
    "project_2d",
    "evaluate_predictions",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts[t][p] = number of samples with true label t predicted as p."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion matrix entries must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, predicted_labels, classes: int) -> ConfusionMatrix:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise ValueError(f"label arrays must be equal-length 1-D, got {true_labels.shape} and {predicted_labels.shape}")
    if len(true_labels) == 0:
        raise ValueError("cannot build a confusion matrix from no samples")
    for name, arr in (("true", true_labels), ("predicted", predicted_labels)):
        if arr.min() < 0 or arr.max() >= classes:
            raise ValueError(f"{name} labels must be in [0, {classes})")
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    return ConfusionMatrix(counts)


def precision_recall_f1(cm: ConfusionMatrix, class_id: int) -> tuple[float, float, float]:
    """Per-class precision, recall and F1; zero denominators yield 0 by convention."""
    if not 0 <= class_id < cm.n_classes:
        raise ValueError(f"class_id {class_id} out of range for {cm.n_classes} classes")
    tp = cm.counts[class_id, class_id]
    fp = cm.counts[:, class_id].sum() - tp
    fn = cm.counts[class_id, :].sum() - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return float(precision), float(recall), float(f1)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 scores."""
    return float(np.mean([precision_recall_f1(cm, c)[2] for c in range(cm.n_classes)]))


def micro_f1(cm: ConfusionMatrix) -> float:
    """Globally pooled F1; equals accuracy for single-label classification."""
    tp = np.trace(cm.counts)
    pooled_fp = cm.total - tp
    pooled_fn = cm.total - tp
    precision = tp / (tp + pooled_fp) if tp + pooled_fp > 0 else 0.0
    recall = tp / (tp + pooled_fn) if tp + pooled_fn > 0 else 0.0
    if precision == recall:  # harmonic mean of equal values, without rounding
        return float(precision)
    return float(2 * precision * recall / (precision + recall))

def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.total)


def roc_auc(scores, true_labels, positive_class: int = 1) -> float:
    """Probability that a random positive outranks a random negative (ties half).

    Computed from average ranks, which is exact and equivalent to counting
    score pairs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    true_labels = np.asarray(true_labels)
    if scores.shape != true_labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D arrays")
    positive = true_labels == positive_class
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: both classes must appear in the truth labels")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1)
    # replace ranks within tied groups by their mean
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def project_2d(features: np.ndarray) -> np.ndarray:
    """Mean-centered projection onto the top two principal directions.

    Components come in descending variance order, with each component's
    largest-magnitude loading made positive so the projection is unique.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"expected (N, d) features, got shape {features.shape}")
    n, d = features.shape
    if n < 3 or d < 2:
        raise ValueError(f"projection needs N >= 3 and d >= 2, got {features.shape}")
    centered = features - features.mean(axis=0)
    if not np.any(centered):
        raise DegenerateInputError("features have zero variance; projection undefined")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return centered @ components.T


@dataclass
class MetricsReport:
    """Per-class and aggregate metrics for one evaluation pass."""

    per_class: list[dict] = field(default_factory=list)
    micro_f1: float = 0.0
    macro_f1: float = 0.0
    auc: float = 0.0
    confusion: ConfusionMatrix | None = None

    def to_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "auc": self.auc,
            "confusion": self.confusion.counts.tolist() if self.confusion is not None else None,
        }


def evaluate_predictions(
    true_labels: np.ndarray,
    predicted_labels: np.ndarray,
    minority_scores: np.ndarray,
    n_classes: int,
    minority_class_id: int,
) -> MetricsReport:
    """Assemble the full metrics report from predictions and minority scores."""
    cm = confusion(true_labels, predicted_labels, n_classes)
    per_class = []
    for class_id in range(n_classes):
        precision, recall, f1 = precision_recall_f1(cm, class_id)
        per_class.append({"class": class_id, "precision": precision, "recall": recall, "f1": f1})
    return MetricsReport(
        per_class=per_class,
        micro_f1=micro_f1(cm),
        macro_f1=macro_f1(cm),
        auc=roc_auc(minority_scores, true_labels, positive_class=minority_class_id),
        confusion=cm,
    )
