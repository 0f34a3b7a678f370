import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebmorph.errors import EmptyCounts, LengthMismatch, SingleClass
from ebmorph.metrics import (
    ConfusionCounts,
    EvalReport,
    auc,
    confusion,
    evaluate,
    format_table,
    report,
    to_json,
)
from reference_counts import BINARY_ROWS, SPOT_ROWS, exact_metrics, within_tolerance


def roc_trapezoid(scores, truths):
    """Sweep every distinct threshold from above and integrate the ROC polyline."""
    scores = np.asarray(scores, float)
    truths = np.asarray(truths)
    pos, neg = truths.sum(), truths.size - truths.sum()
    points = [(0.0, 0.0)]
    for t in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= t
        tpr = (predicted & (truths == 1)).sum() / pos
        fpr = (predicted & (truths == 0)).sum() / neg
        points.append((fpr, tpr))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return area


# --- confusion -------------------------------------------------------------------


def test_confusion_perfect():
    truths = [1] * 10 + [0] * 10
    assert confusion(truths, truths) == ConfusionCounts(tn=10, fp=0, fn=0, tp=10)


def test_confusion_all_false_positive():
    c = confusion([1] * 5, [0] * 5)
    assert c.fp == 5 and c.tn == c.fn == c.tp == 0


def test_confusion_matches_tally():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 2, 1000)
    truths = rng.integers(0, 2, 1000)
    tally = {"tn": 0, "fp": 0, "fn": 0, "tp": 0}
    for p, t in zip(preds, truths):
        key = {(0, 0): "tn", (1, 0): "fp", (0, 1): "fn", (1, 1): "tp"}[(int(p), int(t))]
        tally[key] += 1
    assert confusion(preds, truths) == ConfusionCounts(**tally)


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        confusion([0, 2], [0, 1])
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


# --- report -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "counts,expected",
    [
        ((120, 4, 2, 74), (0.97, 0.95, 0.97, 0.96)),
        ((2, 42, 0, 46), (0.53, 0.52, 1.00, 0.69)),
        ((35, 0, 17, 0), (0.67, 0.00, 0.00, 0.00)),
    ],
)
def test_report_examples(counts, expected):
    rep = report(ConfusionCounts(*counts))
    got = (rep.accuracy, rep.precision, rep.recall, rep.f1)
    assert tuple(round(v, 2) for v in got) == expected


@pytest.mark.parametrize("name,published,counts", BINARY_ROWS + SPOT_ROWS, ids=[r[0] for r in BINARY_ROWS + SPOT_ROWS])
def test_published_rows_reproduce(name, published, counts):
    rep = report(ConfusionCounts(*counts))
    got = (rep.accuracy, rep.precision, rep.recall, rep.f1)
    for value, exact, printed in zip(got, exact_metrics(*counts), published):
        assert value == pytest.approx(float(exact), abs=1e-15)
        assert within_tolerance(value, printed), (name, value, printed)


def test_zero_over_zero_is_zero():
    rep = report(ConfusionCounts(10, 0, 0, 0))
    assert (rep.precision, rep.recall, rep.f1) == (0.0, 0.0, 0.0)
    assert rep.accuracy == 1.0


def test_empty_counts():
    with pytest.raises(EmptyCounts):
        report(ConfusionCounts(0, 0, 0, 0))


@settings(max_examples=100, deadline=None)
@given(
    counts=st.tuples(*[st.integers(0, 500)] * 4).filter(lambda c: sum(c) > 0),
    k=st.integers(1, 50),
)
def test_report_scale_free(counts, k):
    a = report(ConfusionCounts(*counts))
    b = report(ConfusionCounts(*(k * c for c in counts)))
    for name in ("accuracy", "precision", "recall", "f1"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), abs=1e-12)


# --- auc ---------------------------------------------------------------------------------


def test_auc_separated_and_tied():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert auc([0.5] * 7, [0, 1, 0, 1, 1, 0, 0]) == 0.5


def test_auc_matches_threshold_sweep():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = 50
        truths = rng.integers(0, 2, n)
        if truths.min() == truths.max():
            continue
        scores = np.round(rng.uniform(0, 1, n), int(rng.integers(1, 4)))  # some ties
        assert abs(auc(scores, truths) - roc_trapezoid(scores, truths)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_complement_without_ties(pairs):
    scores = np.array([p[0] for p in pairs])
    truths = np.array([p[1] for p in pairs])
    flipped = 1 - scores
    if truths.min() == truths.max() or np.unique(scores).size != scores.size:
        return
    if np.unique(flipped).size != flipped.size:  # 1 - x can round distinct x together
        return
    assert auc(flipped, truths) == pytest.approx(1 - auc(scores, truths), abs=1e-12)


def test_auc_errors():
    with pytest.raises(SingleClass):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(LengthMismatch):
        auc([0.1, 0.2, 0.3], [0, 1])


# --- evaluate and output ---------------------------------------------------------------------


def test_evaluate_threshold_is_strict():
    rep = evaluate([0.5, 0.51, 0.2, 0.9], [0, 1, 0, 1])
    assert rep.counts == ConfusionCounts(tn=2, fp=0, fn=0, tp=2)
    assert rep.auc == 1.0


def test_evaluate_single_class_has_no_auc():
    rep = evaluate([0.2, 0.7], [0, 0])
    assert rep.auc is None
    assert rep.counts.fp == 1


def test_json_and_table():
    rep = report(ConfusionCounts(120, 4, 2, 74), auc_value=0.9)
    d = json.loads(to_json(rep, task="binary"))
    assert d["counts"] == {"tn": 120, "fp": 4, "fn": 2, "tp": 74}
    assert d["task"] == "binary" and d["auc"] == 0.9
    table = format_table({"gaia_res": rep, "other": EvalReport(0.5, 0.0, 0.0, 0.0)})
    lines = table.splitlines()
    assert lines[0].split() == ["Model", "Accuracy", "Precision", "Recall", "F1", "TN", "FP", "FN", "TP", "AUC"]
    assert lines[1].split() == ["gaia_res", "0.97", "0.95", "0.97", "0.96", "120", "4", "2", "74", "0.90"]
    assert len({len(line) for line in lines[:2]}) == 1
