"""Confusion-matrix accounting and per-class / weighted / macro F1.

Zero-division convention: a class with no predicted (or no true) samples
gets precision (recall) 0 and therefore F1 0, and still participates in the
macro average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def confusion_matrix(y_true, y_pred, n_classes: int) -> Array:
    """Count matrix with entry (i, j) = samples of true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} true vs {y_pred.shape} predicted")
    if y_true.size and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= n_classes):
        raise ValueError(f"labels out of range for {n_classes} classes")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (y_true, y_pred), 1)
    return m


@dataclass
class MetricsReport:
    confusion: Array
    precision: Array
    recall: Array
    f1: Array
    support: Array
    weighted_f1: float
    macro_f1: float
    class_names: list[str] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.f1)

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "support": self.support.tolist(),
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            precision=np.asarray(d["precision"], dtype=np.float64),
            recall=np.asarray(d["recall"], dtype=np.float64),
            f1=np.asarray(d["f1"], dtype=np.float64),
            support=np.asarray(d["support"], dtype=np.int64),
            weighted_f1=float(d["weighted_f1"]),
            macro_f1=float(d["macro_f1"]),
            class_names=list(d.get("class_names", [])),
        )


def f1_scores(confusion: Array, class_names: list[str] | None = None) -> MetricsReport:
    """Per-class precision/recall/F1 plus class-ratio-weighted and even averages."""
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {confusion.shape}")
    c = confusion.shape[0]
    tp = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(true_totals > 0, tp / true_totals, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    total = confusion.sum()
    support = confusion.sum(axis=1)
    weighted = float((support / total * f1).sum()) if total > 0 else 0.0
    macro = float(f1.mean()) if c else 0.0
    return MetricsReport(
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        weighted_f1=weighted,
        macro_f1=macro,
        class_names=list(class_names) if class_names else [str(i) for i in range(c)],
    )


def report_from_labels(y_true, y_pred, n_classes: int,
                       class_names: list[str] | None = None) -> MetricsReport:
    return f1_scores(confusion_matrix(y_true, y_pred, n_classes), class_names)


def format_table(report: MetricsReport) -> str:
    """Per-class text table: one row per class with support, P, R, F1."""
    lines = [f"{'class':<16}{'support':>9}{'precision':>11}{'recall':>9}{'f1':>9}"]
    for i in range(report.n_classes):
        name = report.class_names[i] if i < len(report.class_names) else str(i)
        lines.append(
            f"{name:<16}{report.support[i]:>9d}"
            f"{report.precision[i]:>11.4f}{report.recall[i]:>9.4f}{report.f1[i]:>9.4f}"
        )
    lines.append(f"{'weighted f1':<16}{'':>9}{'':>11}{'':>9}{report.weighted_f1:>9.4f}")
    lines.append(f"{'macro f1':<16}{'':>9}{'':>11}{'':>9}{report.macro_f1:>9.4f}")
    return "\n".join(lines)
