"""Confusion matrix, precision/recall/F1, accuracy, one-vs-rest AUC, reports.

Confusion matrices use rows = true class, columns = predicted class.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np
from scipy.stats import rankdata

from .data import CLASS_NAMES
from .errors import InputError


class UndefinedMetricWarning(UserWarning):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise InputError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise InputError("confusion counts must be non-negative")
        if len(self.class_names) != self.counts.shape[0]:
            self.class_names = tuple(f"class{i}" for i in range(self.counts.shape[0]))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def render(self) -> str:
        names = list(self.class_names)
        width = max(9, *(len(n) for n in names)) + 1
        lines = ["True/Pred".ljust(width) + "".join(n.rjust(width) for n in names)]
        for n, row in zip(names, self.counts):
            lines.append(n.ljust(width) + "".join(str(v).rjust(width) for v in row))
        return "\n".join(lines)


def confusion_matrix(true_labels, pred_labels, num_classes: int, class_names=None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise InputError(f"label length mismatch: {t.shape} vs {p.shape}")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= num_classes):
        raise InputError(f"labels must lie in [0, {num_classes})")
    counts = np.bincount(t * num_classes + p, minlength=num_classes * num_classes).reshape(num_classes, num_classes)
    names = tuple(class_names) if class_names is not None else CLASS_NAMES[:num_classes]
    return ConfusionMatrix(counts, names)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


def _f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def precision_recall_f1(cm: ConfusionMatrix) -> tuple[list[ClassMetrics], ClassMetrics]:
    """Per-class metrics and their unweighted macro average.

    Empty columns give precision 0 and empty rows recall 0; both cases warn.
    """
    c = cm.counts
    tp = np.diag(c).astype(np.float64)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    per = []
    for i in range(len(tp)):
        if col[i] == 0 or row[i] == 0:
            warnings.warn(f"class {cm.class_names[i]!r} has an empty row or column; metric set to 0",
                          UndefinedMetricWarning, stacklevel=2)
        p = tp[i] / col[i] if col[i] else 0.0
        r = tp[i] / row[i] if row[i] else 0.0
        per.append(ClassMetrics(float(p), float(r), float(_f1(p, r)), int(row[i])))
    macro = ClassMetrics(
        float(np.mean([m.precision for m in per])),
        float(np.mean([m.recall for m in per])),
        float(np.mean([m.f1 for m in per])),
        int(row.sum()),
    )
    return per, macro


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise InputError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts) / cm.total)


def binary_auc(scores, positives) -> float:
    """Mann-Whitney AUC; tied scores earn half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks handle ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_ovr_macro(probs, labels, return_excluded: bool = False):
    """Macro mean of one-vs-rest AUCs over classes that have both outcomes."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    aucs, excluded = [], []
    for c in range(probs.shape[1]):
        pos = labels == c
        if pos.all() or not pos.any():
            excluded.append(c)
            continue
        aucs.append(binary_auc(probs[:, c], pos))
    if not aucs:
        raise InputError("AUC undefined: labels contain a single class")
    value = float(np.mean(aucs))
    return (value, excluded) if return_excluded else value


@dataclass
class MetricsReport:
    class_names: list[str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    auc: float | None
    num_samples: int
    confusion: list[list[int]] = field(default_factory=list)


def build_report(cm: ConfusionMatrix, probs=None, labels=None) -> MetricsReport:
    per, macro = precision_recall_f1(cm)
    auc = None
    if probs is not None and labels is not None:
        try:
            auc = auc_ovr_macro(probs, labels)
        except InputError:
            auc = None
    return MetricsReport(
        class_names=list(cm.class_names),
        precision=[m.precision for m in per],
        recall=[m.recall for m in per],
        f1=[m.f1 for m in per],
        support=[m.support for m in per],
        macro_precision=macro.precision,
        macro_recall=macro.recall,
        macro_f1=macro.f1,
        accuracy=accuracy(cm),
        auc=auc,
        num_samples=cm.total,
        confusion=cm.counts.tolist(),
    )


def round_half_even(x: float, places: int = 2) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_EVEN))


def emit_report(report: MetricsReport, format: str = "table") -> str:
    if format == "structured":
        return json.dumps(asdict(report), sort_keys=True, separators=(",", ":"))
    if format != "table":
        raise ValueError(f"unknown report format {format!r}")
    lines = [f"{'Class/Metric':<16}{'Value':>8}"]
    for i, name in enumerate(report.class_names):
        lines.append(name)
        for label, values in (("F1", report.f1), ("Precision", report.precision), ("Recall", report.recall)):
            lines.append(f"  {label:<14}{round_half_even(values[i]):>8}")
    lines.append("Macro avg.")
    for label, v in (("F1", report.macro_f1), ("Precision", report.macro_precision), ("Recall", report.macro_recall)):
        lines.append(f"  {label:<14}{round_half_even(v):>8}")
    lines.append(f"{'Accuracy':<16}{round_half_even(report.accuracy):>8}")
    lines.append(f"{'AUC (OvR)':<16}{'n/a' if report.auc is None else round_half_even(report.auc):>8}")
    lines.append(f"{'Samples':<16}{report.num_samples:>8}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> MetricsReport:
    return MetricsReport(**json.loads(text))
