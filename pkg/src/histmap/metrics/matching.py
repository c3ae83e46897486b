"""Prediction-to-ground-truth matching and average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class CostMatrix:
    """``values[i, j]``: average distance (m) from prediction ``i`` to GT ``j``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise MatchError(f"cost matrix must be 2-D, got shape {v.shape}")
        if v.size and (not np.all(np.isfinite(v)) or v.min() < 0):
            raise MatchError("cost matrix entries must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MatchResult:
    tp: np.ndarray
    fp: np.ndarray
    gt_covered: np.ndarray
    # GT indices claimed by each prediction, for audit traces
    matches: List[List[int]]


def global_instance_match(
    cm, as_scores: Sequence[float], tau_dis: float, tau_valid: float = 2.0
) -> MatchResult:
    """Score-ordered matching in which one prediction may cover several GT.

    Predictions are visited by descending average score. A prediction whose
    closest GT lies within ``tau_dis`` claims every still-uncovered GT within
    ``tau_dis`` and earns one TP per claim. Otherwise it is a false positive
    only if its closest GT is within ``tau_dis + tau_valid``; farther ones are
    treated as plausibly unannotated and counted as neither.
    """
    values = cm.values if isinstance(cm, CostMatrix) else CostMatrix(cm).values
    scores = np.asarray(as_scores, dtype=float)
    n_pred, n_gt = values.shape
    if scores.shape != (n_pred,):
        raise MatchError(f"{len(scores)} scores for {n_pred} predictions")
    tp = np.zeros(n_pred, dtype=np.int64)
    fp = np.zeros(n_pred, dtype=np.int64)
    covered = np.zeros(n_gt, dtype=bool)
    matches: List[List[int]] = [[] for _ in range(n_pred)]
    for i in np.argsort(-scores, kind="stable"):
        row = values[i]
        row_min = row.min() if n_gt else math.inf
        if row_min <= tau_dis:
            for j in range(n_gt):
                if row[j] <= tau_dis and not covered[j]:
                    covered[j] = True
                    tp[i] += 1
                    matches[i].append(j)
        elif row_min > tau_dis + tau_valid:
            fp[i] = 0
        else:
            fp[i] = 1
    return MatchResult(tp, fp, covered, matches)


def greedy_match(scores, cost, threshold: float, higher_is_better: bool = False):
    """One-to-one matching by descending score.

    Each prediction takes the best still-uncovered GT that passes
    ``threshold`` (``cost <= threshold``, or ``>=`` for similarities).
    Returns ``(tp, fp, matched)`` indexed like the predictions, with
    ``matched[i] = -1`` for unmatched predictions.
    """
    cost = np.asarray(cost, dtype=float)
    n_pred = len(scores)
    n_gt = cost.shape[1] if cost.ndim == 2 else 0
    tp = np.zeros(n_pred, dtype=np.int64)
    fp = np.zeros(n_pred, dtype=np.int64)
    matched = np.full(n_pred, -1, dtype=np.int64)
    covered = np.zeros(n_gt, dtype=bool)
    for i in np.argsort(-np.asarray(scores, dtype=float), kind="stable"):
        row = cost[i] if n_gt else np.zeros(0)
        ok = ~covered & ((row >= threshold) if higher_is_better else (row <= threshold))
        if ok.any():
            cand = np.nonzero(ok)[0]
            j = cand[np.argmax(row[cand])] if higher_is_better else cand[np.argmin(row[cand])]
            covered[j] = True
            tp[i] = 1
            matched[i] = j
        else:
            fp[i] = 1
    return tp, fp, matched


def average_precision(tp, fp, n_gt: int, scores=None) -> Optional[float]:
    """All-point interpolated AP in percent, or None when there is no GT.

    ``tp``/``fp`` are per-prediction counts; when ``scores`` is given they
    are ranked by it (descending, stable), otherwise they are taken as
    already ranked. Rows with neither a TP nor an FP do not enter the curve.
    """
    if n_gt <= 0:
        return None
    tp = np.asarray(tp, dtype=np.int64)
    fp = np.asarray(fp, dtype=np.int64)
    if scores is not None:
        order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
        tp, fp = tp[order], fp[order]
    keep = (tp + fp) > 0
    tp, fp = tp[keep], fp[keep]
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(fp)
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall rises by tp[k] / n_gt at rank k; exact sums keep perfect runs at 100
    area = math.fsum(float(t) * float(p) for t, p in zip(tp, envelope) if t)
    return 100.0 * area / n_gt
