"""Single-frame Chamfer mAP over the three map categories."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import CATEGORIES, MapElement, chamfer_points, resample_points
from ..parallel import pmap
from .matching import average_precision, greedy_match
from .report import EvalReport, mean_or_none, thr_key

FRAME_THRESHOLDS = (0.5, 1.0, 1.5)


def chamfer_matrix(preds: Sequence[MapElement], gts: Sequence[MapElement], n_samples: int = 100,
                   directional: bool = False) -> np.ndarray:
    a = [resample_points(e.as_polyline().points, n_samples) for e in preds]
    b = [resample_points(e.as_polyline().points, n_samples) for e in gts]
    out = np.zeros((len(a), len(b)))
    for i, pa in enumerate(a):
        for j, pb in enumerate(b):
            out[i, j] = chamfer_points(pa, pb, directional)
    return out


def _category_ap(preds, gts, thresholds, n_samples, directional):
    if not preds and not gts:
        return {thr_key(t): None for t in thresholds}, []
    scores = np.array([p.score for p in preds])
    cm = chamfer_matrix(preds, gts, n_samples, directional)
    table, traces = {}, []
    for t in thresholds:
        if not gts:
            table[thr_key(t)] = 0.0
            continue
        tp, fp, matched = greedy_match(scores, cm, t)
        table[thr_key(t)] = average_precision(tp, fp, len(gts), scores)
        traces.append({
            "threshold": t,
            "predictions": [
                {
                    "pred_id": p.track_id,
                    "score": p.score,
                    "matched_gt": [] if m < 0 else [gts[m].track_id],
                    "distances": [] if m < 0 else [float(cm[i, m])],
                    "tp": int(tp[i]),
                    "fp": int(fp[i]),
                }
                for i, (p, m) in enumerate(zip(preds, matched))
            ],
        })
    return table, traces


def frame_map(
    preds: Sequence[MapElement],
    gts: Sequence[MapElement],
    thresholds: Sequence[float] = FRAME_THRESHOLDS,
    n_samples: int = 100,
    directional: bool = False,
) -> EvalReport:
    """Chamfer AP per category and threshold, with greedy score-ordered matching.

    Pedestrian polygons are compared through their closed boundary. A
    category with neither GT nor predictions is skipped; predictions with no
    GT score 0.
    """
    ap, traces = {}, []
    for cat in CATEGORIES:
        p = [e for e in preds if e.category is cat]
        g = [e for e in gts if e.category is cat]
        table, cat_traces = _category_ap(p, g, thresholds, n_samples, directional)
        ap[cat.value] = table
        traces.extend({"category": cat.value, **tr} for tr in cat_traces)
    mean = mean_or_none(v for table in ap.values() for v in table.values())
    config = {"thresholds": list(thresholds), "n_samples": n_samples, "directional": directional}
    return EvalReport("frame", ap, mean, config=config, traces=traces)


def sequence_frame_map(
    frames: List[Tuple[int, Sequence[MapElement], Sequence[MapElement]]],
    thresholds: Sequence[float] = FRAME_THRESHOLDS,
    n_samples: int = 100,
    directional: bool = False,
) -> EvalReport:
    """Per-frame mAP for ``(frame_index, preds, gts)`` triples and their mean."""
    reports = pmap(lambda f: frame_map(f[1], f[2], thresholds, n_samples, directional), frames)
    ap = {}
    for cat in CATEGORIES:
        ap[cat.value] = {
            thr_key(t): mean_or_none(r.ap[cat.value][thr_key(t)] for r in reports) for t in thresholds
        }
    per_frame = [{"frame_index": f[0], "mAP": r.mean_ap} for f, r in zip(frames, reports)]
    traces = [{"frame_index": f[0], **tr} for f, r in zip(frames, reports) for tr in r.traces]
    mean: Optional[float] = mean_or_none(r.mean_ap for r in reports)
    config = {"thresholds": list(thresholds), "n_samples": n_samples, "directional": directional}
    return EvalReport("frame", ap, mean, config=config, frames=per_frame, traces=traces)
