"""Whole-sequence map evaluation.

Ground truth observed frame by frame is assembled into one global raster
per instance; tracked predictions are merged per track the same way. Each
polyline instance is then re-vectorized by farthest point sampling over
its occupied cells, and polygons are compared as filled masks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely

from ..geometry import (
    CATEGORIES,
    Category,
    GeometryError,
    MapElement,
    Polygon,
    Polyline,
    Pose2,
    chamfer_points,
    resample_points,
    transform,
)
from ..parallel import pmap
from ..raster import GridSpec, element_cells
from ..tracker import TrackRecord
from .matching import CostMatrix, average_precision, global_instance_match, greedy_match
from .report import EvalReport, mean_or_none, thr_key

log = logging.getLogger(__name__)

TAU_DIS = (0.25, 0.5, 0.75, 1.0)
TAU_VALID = 2.0
IOU_THRESHOLDS = (0.25, 0.5, 0.75)
GLOBAL_RESOLUTION = 0.3
GLOBAL_MARGIN = 15.0
FIT_POINTS = 20
MAX_GAP_CELLS = 5


class GlobalEvalError(ValueError):
    pass


@dataclass
class GlobalMap:
    """Global-frame instances with the raster each was fitted from.

    ``cells[i]`` holds flat cell indices (``row * width + col``) on ``grid``;
    for polygons these are the filled cells.
    """

    grid: GridSpec
    elements: List[MapElement] = field(default_factory=list)
    provenance: List[str] = field(default_factory=list)
    cells: List[np.ndarray] = field(default_factory=list)

    def add(self, element: MapElement, source: str, cells: np.ndarray) -> None:
        self.elements.append(element)
        self.provenance.append(source)
        self.cells.append(cells)

    def of_category(self, category: Category) -> List[int]:
        return [i for i, e in enumerate(self.elements) if e.category is category]

    def raster(self, index: int) -> np.ndarray:
        grid = np.zeros(self.grid.shape, dtype=bool)
        grid.flat[self.cells[index]] = True
        return grid


def global_grid(poses: Sequence[Pose2], bev: GridSpec, resolution: float = GLOBAL_RESOLUTION,
                margin: float = GLOBAL_MARGIN) -> GridSpec:
    """Grid covering every BEV footprint along the trajectory plus ``margin``."""
    if not poses:
        raise GlobalEvalError("empty sequence")
    (x0, x1), (y0, y1) = bev.x_range, bev.y_range
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    pts = np.concatenate([p.apply(corners) for p in poses])
    lo = np.floor((pts.min(axis=0) - margin) / resolution) * resolution
    hi = pts.max(axis=0) + margin
    return GridSpec.from_bounds(lo[0], hi[0], lo[1], hi[1], resolution)


def _flat(cells: np.ndarray, grid: GridSpec) -> np.ndarray:
    return cells[:, 0] * grid.width + cells[:, 1]


def farthest_point_sampling(points: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Indices of ``n`` points picked farthest-first, starting at ``seed``."""
    n = min(n, len(points))
    chosen = [seed]
    dist = np.linalg.norm(points - points[seed], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return np.array(chosen, dtype=np.int64)


def _chain(points: np.ndarray) -> List[int]:
    centroid = points.mean(axis=0)
    start = int(np.argmax(np.linalg.norm(points - centroid, axis=1)))
    order = [start]
    left = set(range(len(points))) - {start}
    while left:
        rest = np.fromiter(left, dtype=np.int64)
        rest.sort()
        d = np.linalg.norm(points[rest] - points[order[-1]], axis=1)
        nxt = int(rest[np.argmin(d)])
        order.append(nxt)
        left.remove(nxt)
    return order


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    grown = out.copy()
    grown[:, 1:] |= out[:, :-1]
    grown[:, :-1] |= out[:, 1:]
    return grown


def _gap_cells(a: np.ndarray, b: np.ndarray, support: np.ndarray, grid: GridSpec) -> float:
    """Longest run (in cells) of the segment ``a -> b`` off the supported raster."""
    step = 0.5 * min(grid.cell_w, grid.cell_h)
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    rows, cols = grid.cell_of(a * (1 - t) + b * t)
    inside = grid.in_bounds(rows, cols)
    on = np.zeros(n, dtype=bool)
    on[inside] = support[rows[inside], cols[inside]]
    longest = run = 0
    for flag in on:
        run = 0 if flag else run + 1
        longest = max(longest, run)
    return longest * step / min(grid.cell_w, grid.cell_h)


def fit_polyline(raster: np.ndarray, grid: GridSpec, n_points: int = FIT_POINTS) -> Polyline:
    """Vectorize an instance raster.

    Farthest point sampling over occupied cell centers (seeded at the first
    occupied cell in row-major order), then greedy nearest-neighbor
    chaining from the sample farthest from their centroid. Links that leave
    the raster for more than ``MAX_GAP_CELLS`` cells split the chain, and
    the longest piece is kept.
    """
    rows, cols = np.nonzero(raster)
    if len(rows) < 2:
        raise GlobalEvalError(f"need at least 2 occupied cells to fit a polyline, got {len(rows)}")
    centers = grid.center_of(rows, cols)
    picked = centers[farthest_point_sampling(centers, max(2, n_points))]
    ordered = picked[_chain(picked)]

    support = _dilate(raster.astype(bool))
    pieces, current = [], [ordered[0]]
    for a, b in zip(ordered[:-1], ordered[1:]):
        if _gap_cells(a, b, support, grid) > MAX_GAP_CELLS:
            pieces.append(np.array(current))
            current = []
        current.append(b)
    pieces.append(np.array(current))
    pieces = [p for p in pieces if len(p) >= 2]
    if not pieces:
        pieces = [ordered]
    best = max(pieces, key=lambda p: np.linalg.norm(np.diff(p, axis=0), axis=1).sum())
    return Polyline(best)


def _polygon_from_cells(flat: np.ndarray, grid: GridSpec) -> Polygon:
    rows, cols = flat // grid.width, flat % grid.width
    x0 = grid.x_range[0] + cols * grid.cell_w
    y0 = grid.y_range[0] + rows * grid.cell_h
    boxes = shapely.box(x0, y0, x0 + grid.cell_w, y0 + grid.cell_h)
    union = shapely.unary_union(boxes)
    if union.geom_type != "Polygon":
        union = max(union.geoms, key=lambda g: g.area)
    shape = shapely.geometry.Polygon(union.exterior).simplify(0.5 * min(grid.cell_w, grid.cell_h))
    try:
        return Polygon(np.asarray(shape.exterior.coords)[:-1])
    except GeometryError:
        hull = shapely.MultiPoint(np.column_stack([x0, y0])).convex_hull
        return Polygon(np.asarray(hull.exterior.coords)[:-1])


def _assemble(category: Category, observations: Sequence[MapElement], grid: GridSpec,
              score: float, instance_id: int, n_points: int) -> Optional[Tuple[MapElement, np.ndarray]]:
    chunks = [element_cells(e, grid, fill=category.is_polygon) for e in observations]
    cells = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    flat = np.unique(_flat(cells, grid))
    if category.is_polygon:
        if len(flat) < 3:
            return None
        geom = _polygon_from_cells(flat, grid)
    else:
        if len(flat) < 2:
            return None
        raster = np.zeros(grid.shape, dtype=bool)
        raster.flat[flat] = True
        geom = fit_polyline(raster, grid, n_points)
    return MapElement(geom, category, min(1.0, max(0.0, score)), instance_id), flat


def raster_global_gt(
    frames: Sequence[Tuple[Sequence[MapElement], Pose2]],
    bev: GridSpec,
    resolution: float = GLOBAL_RESOLUTION,
    margin: float = GLOBAL_MARGIN,
    n_points: int = FIT_POINTS,
    grid: Optional[GridSpec] = None,
) -> GlobalMap:
    """Assemble per-frame local GT into one global instance per GT id."""
    if not frames:
        raise GlobalEvalError("empty sequence")
    if grid is None:
        grid = global_grid([pose for _, pose in frames], bev, resolution, margin)
    per_id: Dict[int, List[MapElement]] = {}
    category: Dict[int, Category] = {}
    for elements, pose in frames:
        for el in elements:
            if el.track_id is None:
                raise GlobalEvalError("global evaluation needs GT ids on every element")
            if category.setdefault(el.track_id, el.category) is not el.category:
                raise GlobalEvalError(f"GT id {el.track_id} changes category")
            per_id.setdefault(el.track_id, []).append(transform(el, pose))
    out = GlobalMap(grid)
    for gid in sorted(per_id):
        built = _assemble(category[gid], per_id[gid], grid, 1.0, gid, n_points)
        if built is None:
            log.warning("GT %d covers too few global cells; dropped", gid)
            continue
        out.add(built[0], f"gt:{gid}", built[1])
    return out


def merge_predictions(tracks: Sequence[TrackRecord], grid: GridSpec, n_points: int = FIT_POINTS) -> GlobalMap:
    """One global instance per track, scored by its mean observation score."""
    out = GlobalMap(grid)
    for rec in sorted(tracks, key=lambda r: r.track_id):
        if not rec.observations:
            continue
        globals_ = [transform(o.element, o.ego_pose) for o in rec.observations]
        built = _assemble(rec.category, globals_, grid, rec.mean_score, rec.track_id, n_points)
        if built is None:
            continue
        out.add(built[0], f"track:{rec.track_id}", built[1])
    return out


def _polyline_cost(pred: GlobalMap, pi: List[int], gt: GlobalMap, gi: List[int],
                   n_samples: int, directional: bool) -> np.ndarray:
    a = [resample_points(pred.elements[i].geometry.points, n_samples) for i in pi]
    b = [resample_points(gt.elements[j].geometry.points, n_samples) for j in gi]
    cm = np.zeros((len(a), len(b)))
    for r, pa in enumerate(a):
        for c, pb in enumerate(b):
            cm[r, c] = chamfer_points(pa, pb, directional)
    return cm


def ap_polyline_global(
    pred: GlobalMap,
    gt: GlobalMap,
    category: Category,
    tau_dis_set: Sequence[float] = TAU_DIS,
    tau_valid: float = TAU_VALID,
    n_samples: int = 100,
    directional: bool = False,
) -> Tuple[Dict[str, Optional[float]], List[dict]]:
    """AP per distance threshold for one polyline category, plus match traces.

    Every AP is None when the category has no GT.
    """
    gi = gt.of_category(category)
    pi = pred.of_category(category)
    if not gi:
        return {thr_key(t): None for t in tau_dis_set}, []
    scores = np.array([pred.elements[i].score for i in pi])
    cm = CostMatrix(_polyline_cost(pred, pi, gt, gi, n_samples, directional))
    table, traces = {}, []
    for tau in tau_dis_set:
        res = global_instance_match(cm, scores, tau, tau_valid)
        table[thr_key(tau)] = average_precision(res.tp, res.fp, len(gi), scores)
        traces.append({
            "category": category.value,
            "threshold": tau,
            "predictions": [
                {
                    "pred_id": pred.elements[i].track_id,
                    "score": float(scores[r]),
                    "matched_gt": [gt.elements[gi[j]].track_id for j in res.matches[r]],
                    "distances": [float(cm.values[r, j]) for j in res.matches[r]],
                    "min_distance": float(cm.values[r].min()),
                    "tp": int(res.tp[r]),
                    "fp": int(res.fp[r]),
                }
                for r, i in enumerate(pi)
            ],
        })
    return table, traces


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two sets of flat cell indices (each sorted and unique)."""
    union = len(a) + len(b)
    if union == 0:
        return 0.0
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return inter / (union - inter)


def ap_polygon_global(
    pred: GlobalMap,
    gt: GlobalMap,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    category: Category = Category.PEDESTRIAN,
) -> Tuple[Dict[str, Optional[float]], List[dict]]:
    gi = gt.of_category(category)
    pi = pred.of_category(category)
    if not gi:
        return {thr_key(t): None for t in iou_thresholds}, []
    scores = np.array([pred.elements[i].score for i in pi])
    iou = np.zeros((len(pi), len(gi)))
    for r, i in enumerate(pi):
        for c, j in enumerate(gi):
            iou[r, c] = mask_iou(pred.cells[i], gt.cells[j])
    table, traces = {}, []
    for t in iou_thresholds:
        tp, fp, matched = greedy_match(scores, iou, t, higher_is_better=True)
        table[thr_key(t)] = average_precision(tp, fp, len(gi), scores)
        traces.append({
            "category": category.value,
            "threshold": t,
            "predictions": [
                {
                    "pred_id": pred.elements[i].track_id,
                    "score": float(scores[r]),
                    "matched_gt": [] if matched[r] < 0 else [gt.elements[gi[matched[r]]].track_id],
                    "iou": [] if matched[r] < 0 else [float(iou[r, matched[r]])],
                    "tp": int(tp[r]),
                    "fp": int(fp[r]),
                }
                for r, i in enumerate(pi)
            ],
        })
    return table, traces


def g_map(
    pred: GlobalMap,
    gt: GlobalMap,
    tau_dis_set: Sequence[float] = TAU_DIS,
    tau_valid: float = TAU_VALID,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    n_samples: int = 100,
    directional: bool = False,
) -> EvalReport:
    """Mean of pedestrian mask AP and divider/boundary Chamfer AP.

    Categories without GT are left out of the mean.
    """

    def run(cat: Category):
        if cat.is_polygon:
            return ap_polygon_global(pred, gt, iou_thresholds, cat)
        return ap_polyline_global(pred, gt, cat, tau_dis_set, tau_valid, n_samples, directional)

    results = pmap(run, CATEGORIES)
    ap = {cat.value: table for cat, (table, _) in zip(CATEGORIES, results)}
    traces = [tr for _, cat_traces in results for tr in cat_traces]
    means = {cat: mean_or_none(ap[cat.value].values()) for cat in CATEGORIES}
    if all(v is None for v in means.values()):
        raise GlobalEvalError("no category has ground truth")
    config = {
        "tau_dis": list(tau_dis_set),
        "tau_valid": tau_valid,
        "iou_thresholds": list(iou_thresholds),
        "n_samples": n_samples,
        "directional": directional,
        "grid": gt.grid.to_dict(),
    }
    return EvalReport(
        "global",
        ap,
        mean_or_none(means.values()),
        ap_polygon=means[Category.PEDESTRIAN],
        ap_polyline=mean_or_none([means[Category.DIVIDER], means[Category.BOUNDARY]]),
        config=config,
        traces=traces,
    )
