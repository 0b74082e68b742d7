"""Binary classification metrics: accuracy, F1, balanced accuracy, ROC-AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    balanced_accuracy: float
    roc_auc: float  # NaN when only one class is present
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def auc_defined(self):
        return not math.isnan(self.roc_auc)

    def to_dict(self):
        return {"accuracy": self.accuracy, "f1": self.f1,
                "balanced_accuracy": self.balanced_accuracy,
                "roc_auc": None if math.isnan(self.roc_auc) else self.roc_auc,
                "auc_defined": self.auc_defined,
                "confusion": {"TP": self.tp, "FP": self.fp, "TN": self.tn, "FN": self.fn}}


def roc_auc(labels, scores):
    """Probability that a random positive outscores a random negative.

    Ties count one half (average ranks).  Returns NaN if a class is absent.
    """
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def confusion(labels, predicted):
    labels = np.asarray(labels).astype(bool)
    predicted = np.asarray(predicted).astype(bool)
    tp = int(np.sum(labels & predicted))
    tn = int(np.sum(~labels & ~predicted))
    fp = int(np.sum(~labels & predicted))
    fn = int(np.sum(labels & ~predicted))
    return tp, fp, tn, fn


def report(labels, scores, threshold=0.5):
    """Metrics for spatter scores thresholded at ``threshold`` (score > threshold)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    scores = np.asarray(scores, dtype=np.float64)
    tp, fp, tn, fn = confusion(labels, scores > threshold)
    n = tp + fp + tn + fn
    tpr = tp / (tp + fn) if tp + fn else float("nan")
    tnr = tn / (tn + fp) if tn + fp else float("nan")
    rates = [r for r in (tpr, tnr) if not math.isnan(r)]
    f1_den = 2 * tp + fp + fn
    return MetricsReport(accuracy=(tp + tn) / n,
                         f1=2 * tp / f1_den if f1_den else 0.0,
                         balanced_accuracy=sum(rates) / len(rates),
                         roc_auc=roc_auc(labels, scores), tp=tp, fp=fp, tn=tn, fn=fn)


def evaluate(model, ds, threshold=0.5):
    from .models import predict_proba
    return report(ds.y, predict_proba(model, ds)[:, 1], threshold)


SCORERS = {
    "roc_auc": roc_auc,
    "accuracy": lambda y, s: report(y, s).accuracy,
    "balanced_accuracy": lambda y, s: report(y, s).balanced_accuracy,
    "f1": lambda y, s: report(y, s).f1,
}
