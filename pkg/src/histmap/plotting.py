"""Matplotlib figures written next to reports and renders."""

from __future__ import annotations

import hashlib
import colorsys
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Category  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps PNG bytes reproducible
    "svg.hashsalt": "histmap",
}

CATEGORY_COLORS = {
    Category.PEDESTRIAN: "#1f77b4",
    Category.DIVIDER: "#ff7f0e",
    Category.BOUNDARY: "#2ca02c",
}


def id_color(track_id: int) -> str:
    """Stable color for an instance id, derived from a hash of the id."""
    digest = hashlib.sha1(str(int(track_id)).encode()).digest()
    hue = digest[0] / 255.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.85)
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_global_map(gt_map, pred_map=None, path="global_map.png", title: Optional[str] = None) -> Path:
    """Global GT rasters as category layers with merged predictions drawn over them."""
    with plt.rc_context(STYLE):
        grid = gt_map.grid
        fig, ax = plt.subplots(figsize=(6, 6 * grid.height / max(grid.width, 1) + 0.5))
        extent = (*grid.x_range, *grid.y_range)
        canvas = np.ones((*grid.shape, 3))
        for i, el in enumerate(gt_map.elements):
            rgb = matplotlib.colors.to_rgb(CATEGORY_COLORS[el.category])
            mask = gt_map.raster(i)
            canvas[mask] = 0.55 * np.array(rgb) + 0.45
        ax.imshow(canvas, origin="lower", extent=extent, interpolation="nearest")
        if pred_map is not None:
            for el in pred_map.elements:
                pts = el.points if not el.category.is_polygon else np.vstack([el.points, el.points[:1]])
                ax.plot(pts[:, 0], pts[:, 1], "-", lw=1.0, color=id_color(el.track_id))
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_ap_bars(report, path="ap.png") -> Path:
    with plt.rc_context(STYLE):
        cats = list(report.ap)
        thresholds = sorted({t for tab in report.ap.values() for t in tab}, key=float)
        fig, ax = plt.subplots(figsize=(5, 3))
        width = 0.8 / max(len(thresholds), 1)
        for k, t in enumerate(thresholds):
            vals = [report.ap[c].get(t) for c in cats]
            xs = np.arange(len(cats)) + k * width
            ax.bar(xs, [0.0 if v is None else v for v in vals], width, label=f"@{t}")
        ax.set_xticks(np.arange(len(cats)) + width * (len(thresholds) - 1) / 2)
        ax.set_xticklabels(cats)
        ax.set_ylim(0, 105)
        ax.set_ylabel("AP")
        label = "mAP" if report.mode == "frame" else "G-mAP"
        value = "-" if report.mean_ap is None else f"{report.mean_ap:.1f}"
        ax.set_title(f"{label} = {value}")
        ax.legend(ncol=len(thresholds), frameon=False, loc="lower right")
        return _save(fig, path)


def plot_frame_series(report, path="frame_map.png") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 2.5))
        xs = [f["frame_index"] for f in report.frames]
        ys = [np.nan if f["mAP"] is None else f["mAP"] for f in report.frames]
        ax.plot(xs, ys, "-", lw=1.2, color="k")
        ax.set_xlabel("frame")
        ax.set_ylabel("mAP")
        ax.set_ylim(0, 105)
        return _save(fig, path)


def plot_history(grid: np.ndarray, spec, path, title: Optional[str] = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 5 * spec.height / spec.width + 0.4))
        im = ax.imshow(grid, origin="lower", extent=(*spec.x_range, *spec.y_range), vmin=0, vmax=1,
                       cmap="magma", interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.8, label="confidence")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def layer_counts(gt_map) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for el, cells in zip(gt_map.elements, gt_map.cells):
        out[el.category.value] = out.get(el.category.value, 0) + len(cells)
    return out


def svg_document(width: int, height: int, paths: Sequence[str]) -> str:
    body = "\n".join(f"  {p}" for p in paths)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'  <rect width="{width}" height="{height}" fill="white"/>\n'
        + (body + "\n" if paths else "")
        + "</svg>\n"
    )
