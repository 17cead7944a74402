"""Accuracy, rank AUC, concordance index, ROC points and time-dependent AUC."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """The metric has no comparable pairs / only one class present."""


@dataclass
class EvalRecord:
    """Held-out prediction for one sample.

    Classification tasks fill ``scores`` with class probabilities and
    ``label``; survival fills ``scores`` with ``(risk,)`` plus ``time`` and
    ``censor`` (1 = censored).
    """

    sample_id: str
    scores: tuple[float, ...]
    label: int | None = None
    time: float | None = None
    censor: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def risk(self) -> float:
        return self.scores[0]


def _score_matrix(records: Sequence[EvalRecord]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise UndefinedMetricError("no records")
    scores = np.array([r.scores for r in records], dtype=np.float64)
    labels = np.array([r.label for r in records], dtype=np.int64)
    return scores, labels


def accuracy(records: Sequence[EvalRecord]) -> float:
    """Fraction whose argmax score equals the label (ties go to the lowest class index)."""
    scores, labels = _score_matrix(records)
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)  # average ranks, so every rank is a multiple of 1/2
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_class_auc(records: Sequence[EvalRecord]) -> dict[int, float]:
    """One-vs-rest AUC for every class that has both positives and negatives."""
    scores, labels = _score_matrix(records)
    out = {}
    for c in range(scores.shape[1]):
        positive = labels == c
        if positive.all() or not positive.any():
            warnings.warn(f"class {c} skipped in AUC: only one side present", RuntimeWarning, stacklevel=2)
            continue
        out[c] = binary_auc(scores[:, c], positive)
    return out


def roc_auc(records: Sequence[EvalRecord]) -> float:
    """Macro one-vs-rest AUC."""
    per_class = per_class_auc(records)
    if not per_class:
        raise UndefinedMetricError("AUC undefined: single-class input")
    return float(sum(per_class.values()) / len(per_class))


def roc_points(records: Sequence[EvalRecord], class_index: int) -> list[tuple[float, float]]:
    """ROC staircase for one class vs rest, from (0, 0) to (1, 1).

    One point per distinct score (descending threshold); tied scores give a
    diagonal step, so the trapezoid area equals the tie-aware AUC.
    """
    scores, labels = _score_matrix(records)
    s = scores[:, class_index]
    positive = labels == class_index
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"ROC for class {class_index} needs both classes present")
    order = np.argsort(-s, kind="stable")
    s_sorted, pos_sorted = s[order], positive[order]
    tp = np.cumsum(pos_sorted)
    fp = np.cumsum(~pos_sorted)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    points = [(0.0, 0.0)]
    points += [(fp[i] / n_neg, tp[i] / n_pos) for i in last]
    return [(float(x), float(y)) for x, y in points]


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))


def _survival_arrays(records: Sequence[EvalRecord]):
    if not records:
        raise UndefinedMetricError("no records")
    risk = np.array([r.risk for r in records], dtype=np.float64)
    time = np.array([r.time for r in records], dtype=np.float64)
    event = np.array([r.censor == 0 for r in records], dtype=bool)
    return risk, time, event


def concordance_index(records: Sequence[EvalRecord]) -> float:
    """Harrell's C over pairs where the shorter time is an observed event.

    Pairs with equal times are not comparable. Tied risks count 1/2.
    """
    risk, time, event = _survival_arrays(records)
    comparable = (time[:, None] < time[None, :]) & event[:, None]
    n = int(comparable.sum())
    if n == 0:
        raise UndefinedMetricError("concordance index: no comparable pairs")
    concordant = int((comparable & (risk[:, None] > risk[None, :])).sum())
    tied = int((comparable & (risk[:, None] == risk[None, :])).sum())
    return float((concordant + 0.5 * tied) / n)


def time_dependent_auc(records: Sequence[EvalRecord], eval_times: Iterable[float]) -> list[tuple[float, float]]:
    """Cumulative/dynamic AUC of risk at each time, without censoring weights.

    Cases: observed event at or before ``t``; controls: time beyond ``t``.
    Times lacking a case or a control are left out of the result.
    """
    risk, time, event = _survival_arrays(records)
    out = []
    for t in eval_times:
        cases = event & (time <= t)
        controls = time > t
        if not cases.any() or not controls.any():
            continue
        keep = cases | controls
        out.append((float(t), binary_auc(risk[keep], cases[keep])))
    return out


def write_points_csv(path: str | Path, header: tuple[str, str], points: Iterable[tuple[float, float]]) -> None:
    """Two-column CSV with a header line and 12 decimal places per value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in points:
            w.writerow([f"{x:.12f}", f"{y:.12f}"])


def read_points_csv(path: str | Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [(float(a), float(b)) for a, b in rows[1:]]
