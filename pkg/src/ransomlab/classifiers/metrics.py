"""Binary classification metrics with the malicious class (1) as positive."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DegenerateLabels, EmptySet


def roc_curve(labels, scores):
    """FPR/TPR at every distinct score threshold, from (0, 0) to (1, 1).

    Tied scores move the curve diagonally, so ties are scored as half-credit.
    """
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    P, N = int(y.sum()), int((~y).sum())
    if P == 0 or N == 0:
        raise DegenerateLabels("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    fpr = np.r_[0.0, fps / N]
    tpr = np.r_[0.0, tps / P]
    thresholds = np.r_[np.inf, s[last]]
    return fpr, tpr, thresholds


def auc_score(labels, scores) -> float:
    fpr, tpr, _ = roc_curve(labels, scores)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class MetricsReport:
    accuracy: float
    fpr: float
    tpr: float
    f1: float
    auc: float
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, labels, predicted, scores) -> "MetricsReport":
        y = np.asarray(labels).astype(int)
        p = np.asarray(predicted).astype(int)
        if y.size == 0:
            raise EmptySet("no test samples")
        if y.min() == y.max():
            raise DegenerateLabels("test set has a single class")
        tp = int(np.sum((p == 1) & (y == 1)))
        fp = int(np.sum((p == 1) & (y == 0)))
        tn = int(np.sum((p == 0) & (y == 0)))
        fn = int(np.sum((p == 0) & (y == 1)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(accuracy=(tp + tn) / y.size, fpr=fp / (fp + tn), tpr=recall, f1=f1,
                   auc=auc_score(y, scores), tp=tp, fp=fp, tn=tn, fn=fn)

    def as_row(self, name: str) -> list:
        return [name, self.accuracy, self.fpr, self.tpr, self.f1, self.auc]

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_COLUMNS = ["classifier", "accuracy", "fpr", "tpr", "f1", "auc"]


def reports_to_csv(reports: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for name, rep in reports.items():
        w.writerow([name] + [f"{v:.6f}" for v in rep.as_row(name)[1:]])
    return buf.getvalue()
