"""Binary confusion counts, derived scores and rank-based AUC."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyCounts, LengthMismatch, SingleClass


@dataclass(frozen=True)
class ConfusionCounts:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None = None
    counts: ConfusionCounts | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.counts is None:
            d.pop("counts")
        return d


def _binary(labels, name: str) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D sequence")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int64)


def confusion(predictions, truths) -> ConfusionCounts:
    """Counts with class 1 as the positive class."""
    pred = _binary(predictions, "predictions")
    true = _binary(truths, "truths")
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {true.size} truths")
    tn, fp, fn, tp = np.bincount(2 * true + pred, minlength=4)
    return ConfusionCounts(int(tn), int(fp), int(fn), int(tp))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def report(c: ConfusionCounts, auc_value: float | None = None) -> EvalReport:
    """Accuracy, precision, recall and F1; any 0/0 ratio is reported as 0."""
    if c.total == 0:
        raise EmptyCounts("no samples counted")
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return EvalReport(
        accuracy=(c.tn + c.tp) / c.total,
        precision=precision,
        recall=recall,
        f1=_ratio(2 * precision * recall, precision + recall),
        auc=auc_value,
        counts=c,
    )


def auc(scores, truths) -> float:
    """Mann-Whitney AUC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=float)
    true = _binary(truths, "truths")
    if scores.shape != true.shape:
        raise LengthMismatch(f"{scores.size} scores vs {true.size} truths")
    n_pos = int(true.sum())
    n_neg = true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    ranks = rankdata(scores)  # average ranks for ties
    return float((ranks[true == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(scores, truths, threshold: float = 0.5) -> EvalReport:
    """Report for probability scores, predicting class 1 when score > threshold."""
    scores = np.asarray(scores, dtype=float)
    c = confusion((scores > threshold).astype(np.int64), truths)
    true = np.asarray(truths)
    auc_value = auc(scores, true) if 0 < true.sum() < true.size else None
    return report(c, auc_value)


def to_json(rep: EvalReport, **extra) -> str:
    return json.dumps({**rep.to_dict(), **extra}, indent=2, sort_keys=True)


def format_table(rows: dict[str, EvalReport]) -> str:
    """Aligned text table: Model, Accuracy, Precision, Recall, F1, TN, FP, FN, TP[, AUC]."""
    with_auc = any(r.auc is not None for r in rows.values())
    header = ["Model", "Accuracy", "Precision", "Recall", "F1", "TN", "FP", "FN", "TP"]
    if with_auc:
        header.append("AUC")
    table = [header]
    for name, r in rows.items():
        c = r.counts or ConfusionCounts(0, 0, 0, 0)
        line = [name, f"{r.accuracy:.2f}", f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}",
                str(c.tn), str(c.fp), str(c.fn), str(c.tp)]
        if with_auc:
            line.append("" if r.auc is None else f"{r.auc:.2f}")
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    out = []
    for row in table:
        out.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                             for i, (cell, w) in enumerate(zip(row, widths))))
    return "\n".join(out) + "\n"
