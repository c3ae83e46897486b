from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import CATEGORIES
from .io import SceneFrame, SceneHeader
from .metrics import global_grid, merge_predictions, raster_global_gt
from .pipeline import replay_history
from .plotting import CATEGORY_COLORS, id_color, plot_global_map, svg_document
from .raster import HistoryMap, write_pgm
from .tracker import TrackerConfig, TrackRecord


def _to_canvas(points: np.ndarray, grid, size: Tuple[int, int]) -> np.ndarray:
    w, h = size
    sx = w / (grid.x_range[1] - grid.x_range[0])
    sy = h / (grid.y_range[1] - grid.y_range[0])
    s = min(sx, sy)
    u = (points[:, 0] - grid.x_range[0]) * s
    v = h - (points[:, 1] - grid.y_range[0]) * s
    return np.column_stack([u, v])


def _svg_shape(points: np.ndarray, closed: bool, color: str, css: str) -> str:
    coords = " ".join(f"{u:.2f},{v:.2f}" for u, v in points)
    tag = "polygon" if closed else "polyline"
    return f'<{tag} class="{css}" points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def render(
    header: SceneHeader,
    frames: Sequence[SceneFrame],
    out_dir,
    records: Optional[Sequence[TrackRecord]] = None,
    config: Optional[TrackerConfig] = None,
    size: Tuple[int, int] = (800, 800),
    figures: bool = True,
) -> List[Path]:
    """Write the global map as per-category PGM layers and an SVG, plus history snapshots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if not frames:
        for cat in CATEGORIES:
            path = out / f"layer_{cat.value}.pgm"
            write_pgm(HistoryMap.empty(header.bev), path)
            written.append(path)
        path = out / "map.svg"
        path.write_text(svg_document(*size, []))
        return written + [path]

    grid = global_grid([f.ego_pose for f in frames], header.bev)
    gt_map = raster_global_gt([(f.gt, f.ego_pose) for f in frames], header.bev, grid=grid)
    pred_map = merge_predictions(records, grid) if records else None

    for cat in CATEGORIES:
        layer = np.zeros(grid.shape)
        for i in gt_map.of_category(cat):
            layer.flat[gt_map.cells[i]] = 1.0
        path = out / f"layer_{cat.value}.pgm"
        write_pgm(HistoryMap(layer, grid), path)
        written.append(path)

    shapes = []
    for el in gt_map.elements:
        pts = _to_canvas(el.points, grid, size)
        shapes.append(_svg_shape(pts, el.category.is_polygon, CATEGORY_COLORS[el.category],
                                 f"gt {el.category.value} id-{el.track_id}"))
    if pred_map is not None:
        for el in pred_map.elements:
            pts = _to_canvas(el.points, grid, size)
            shapes.append(_svg_shape(pts, el.category.is_polygon, id_color(el.track_id),
                                     f"track {el.category.value} id-{el.track_id}"))
    path = out / "map.svg"
    path.write_text(svg_document(*size, shapes))
    written.append(path)

    if figures:
        written.append(plot_global_map(gt_map, pred_map, out / "global_map.png"))

    if records:
        cfg = config or TrackerConfig(spec=header.bev)
        hist_dir = out / "history"
        hist_dir.mkdir(exist_ok=True)
        for rec in records:
            if not rec.observations:
                continue
            path = hist_dir / f"track_{rec.track_id:05d}.pgm"
            write_pgm(replay_history(rec, cfg), path)
            written.append(path)
    return written
