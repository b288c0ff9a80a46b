"""Accuracy, macro precision/recall/F1 and macro one-vs-rest AUC.

Per-class values that are undefined (zero denominator) are reported as 0 and
flagged. AUC instead drops undefined classes from the macro mean.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels


class EvaluationError(ValueError):
    pass


@dataclass
class ClassMetrics:
    support: int
    precision: float
    recall: float
    f1: float
    auc: float | None = None
    undefined: list[str] = field(default_factory=list)


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[ClassMetrics]
    macro_auc: float | None = None
    total: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        doc = dict(doc)
        doc["per_class"] = [ClassMetrics(**c) for c in doc["per_class"]]
        return cls(**doc)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def confusion_matrix(golds, preds, C: int) -> np.ndarray:
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (np.asarray(golds), np.asarray(preds)), 1)
    return cm


def confusion_metrics(golds, preds, C: int) -> MetricsReport:
    golds = np.asarray(golds, dtype=np.int64).ravel()
    preds = np.asarray(preds, dtype=np.int64).ravel()
    if golds.shape != preds.shape:
        raise EvaluationError(f"{golds.size} gold labels but {preds.size} predictions")
    if golds.size == 0:
        raise EvaluationError("cannot score an empty evaluation set")
    for name, arr in (("gold", golds), ("predicted", preds)):
        if arr.min() < 0 or arr.max() >= C:
            raise EvaluationError(f"{name} label outside 0..{C - 1}")
    cm = confusion_matrix(golds, preds, C)
    per_class = []
    for c in range(C):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = int(cm[c, :].sum()) - tp
        undefined = []
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        if precision is None:
            undefined.append("precision")
            precision = 0.0
        if recall is None:
            undefined.append("recall")
            recall = 0.0
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            undefined.append("f1")
            f1 = 0.0
        per_class.append(ClassMetrics(tp + fn, precision, recall, f1, undefined=undefined))
    return MetricsReport(
        accuracy=int(np.trace(cm)) / golds.size,
        macro_precision=sum(m.precision for m in per_class) / C,
        macro_recall=sum(m.recall for m in per_class) / C,
        macro_f1=sum(m.f1 for m in per_class) / C,
        per_class=per_class,
        total=int(golds.size),
    )


def one_vs_rest_auc(golds, probs) -> list[float | None]:
    """Per-class AUC by pair counting over column ``c`` of ``probs``.

    A positive outranking a negative scores 1, a tie 1/2. Classes with no
    positives or no negatives get ``None``.
    """
    golds = np.asarray(golds, dtype=np.int64).ravel()
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != golds.size:
        raise EvaluationError(f"{golds.size} gold labels for score matrix of shape {probs.shape}")
    out = []
    for c in range(probs.shape[1]):
        is_pos = golds == c
        n_pos = int(is_pos.sum())
        n_neg = golds.size - n_pos
        if n_pos == 0 or n_neg == 0:
            out.append(None)
            continue
        twice = kernels.pair_count(probs[is_pos, c], probs[~is_pos, c])
        out.append(twice / (2 * n_pos * n_neg))
    return out


def macro_auc(golds, prob_rows) -> float:
    probs = np.vstack([np.asarray(r, dtype=np.float64).reshape(1, -1) for r in prob_rows])
    defined = [a for a in one_vs_rest_auc(golds, probs) if a is not None]
    if not defined:
        raise EvaluationError("AUC undefined for every class (need positives and negatives)")
    return sum(defined) / len(defined)


def predict(probs) -> np.ndarray:
    """Argmax per row; ties go to the lowest class index."""
    return np.asarray(probs).argmax(axis=1)


def evaluate(golds, probs) -> MetricsReport:
    """Full report from gold labels and an n x C probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    report = confusion_metrics(golds, predict(probs), probs.shape[1])
    aucs = one_vs_rest_auc(golds, probs)
    for m, a in zip(report.per_class, aucs):
        m.auc = a
        if a is None:
            m.undefined.append("auc")
    defined = [a for a in aucs if a is not None]
    if not defined:
        raise EvaluationError("AUC undefined for every class (need positives and negatives)")
    report.macro_auc = sum(defined) / len(defined)
    return report
