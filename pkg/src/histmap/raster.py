"""Per-instance confidence grids: rasterization, decay, ego warping, masks.

Grid convention: ``grid[row, col]`` with ``row`` indexing ``y`` and ``col``
indexing ``x``, both increasing with the coordinate. Cell ``(r, c)`` has its
center at ``(x_min + (c + 0.5) * cell_w, y_min + (r + 0.5) * cell_h)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from .geometry import MapElement, Polygon, Pose2

_SNAP = 1e-9


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise RasterError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        x0, x1 = map(float, self.x_range)
        y0, y1 = map(float, self.y_range)
        if not (x1 > x0 and y1 > y0):
            raise RasterError(f"degenerate extent x={self.x_range} y={self.y_range}")
        object.__setattr__(self, "x_range", (x0, x1))
        object.__setattr__(self, "y_range", (y0, y1))

    @classmethod
    def default(cls) -> "GridSpec":
        # 60 m along x (forward) by 30 m along y at 0.3 m cells
        return cls(100, 200, (-30.0, 30.0), (-15.0, 15.0))

    @classmethod
    def from_bounds(cls, x_min, x_max, y_min, y_max, resolution: float) -> "GridSpec":
        """Square-cell grid covering the bounds, grown outward to whole cells."""
        width = max(1, int(math.ceil((x_max - x_min) / resolution)))
        height = max(1, int(math.ceil((y_max - y_min) / resolution)))
        return cls(height, width, (x_min, x_min + width * resolution), (y_min, y_min + height * resolution))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def cell_w(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.width

    @property
    def cell_h(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.height

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        xs = self.x_range[0] + (np.arange(self.width) + 0.5) * self.cell_w
        ys = self.y_range[0] + (np.arange(self.height) + 0.5) * self.cell_h
        return xs, ys

    def center_of(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        cols = np.asarray(cols, dtype=float)
        x = self.x_range[0] + (cols + 0.5) * self.cell_w
        y = self.y_range[0] + (rows + 0.5) * self.cell_h
        return np.stack([x, y], axis=-1)

    def cell_of(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Unclipped integer (row, col) indices of the cells containing points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        cols = np.floor((pts[:, 0] - self.x_range[0]) / self.cell_w).astype(np.int64)
        rows = np.floor((pts[:, 1] - self.y_range[0]) / self.cell_h).astype(np.int64)
        return rows, cols

    def in_bounds(self, rows, cols) -> np.ndarray:
        return (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "x_range": list(self.x_range),
            "y_range": list(self.y_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(int(d["height"]), int(d["width"]), tuple(d["x_range"]), tuple(d["y_range"]))


@dataclass(frozen=True)
class HistoryMap:
    grid: np.ndarray
    spec: GridSpec
    last_update_frame: int = 0

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.shape != self.spec.shape:
            raise RasterError(f"grid shape {g.shape} does not match spec {self.spec.shape}")
        if g.size and (g.min() < 0.0 or g.max() > 1.0):
            raise RasterError("history map values must lie in [0, 1]")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def empty(cls, spec: GridSpec, frame: int = 0) -> "HistoryMap":
        return cls(np.zeros(spec.shape), spec, frame)

    def is_empty(self) -> bool:
        return not np.any(self.grid > 0.0)


@dataclass(frozen=True)
class ValidMask:
    """Row-major sorted, deduplicated ``(row, col)`` indices."""

    cells: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        if cells.size and not np.all(self.spec.in_bounds(cells[:, 0], cells[:, 1])):
            raise RasterError("mask index out of bounds")
        if cells.size:
            flat = np.unique(cells[:, 0] * self.spec.width + cells[:, 1])
            cells = np.stack([flat // self.spec.width, flat % self.spec.width], axis=1)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __len__(self) -> int:
        return self.cells.shape[0]


def bresenham(r0: int, c0: int, r1: int, c1: int) -> np.ndarray:
    """Integer cells on the line between two cells, both ends included."""
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    out = [(r, c)]
    while (r, c) != (r1, c1):
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
        out.append((r, c))
    return np.array(out, dtype=np.int64)


def _segment_cells(p: np.ndarray, q: np.ndarray, spec: GridSpec) -> np.ndarray:
    # canonical direction keeps the traced cells independent of point order
    if (q[0], q[1]) < (p[0], p[1]):
        p, q = q, p
    step = 0.5 * min(spec.cell_w, spec.cell_h)
    n = max(2, int(math.ceil(np.linalg.norm(q - p) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    samples = p * (1.0 - t) + q * t
    rows, cols = spec.cell_of(samples)
    cells = [np.array([[rows[0], cols[0]]])]
    for i in range(1, n):
        if rows[i] != rows[i - 1] or cols[i] != cols[i - 1]:
            cells.append(bresenham(rows[i - 1], cols[i - 1], rows[i], cols[i])[1:])
    return np.concatenate(cells)


def trace_cells(points, spec: GridSpec, closed: bool = False) -> np.ndarray:
    """In-bounds ``(row, col)`` cells touched by a polyline (or closed ring)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    chunks = [_segment_cells(pts[i], pts[i + 1], spec) for i in range(len(pts) - 1)]
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    cells = np.concatenate(chunks)
    keep = spec.in_bounds(cells[:, 0], cells[:, 1])
    return cells[keep]


def fill_cells(ring, spec: GridSpec) -> np.ndarray:
    """Cells whose centers fall inside a closed ring (even-odd rule)."""
    ring = np.asarray(ring, dtype=float).reshape(-1, 2)
    (r0, c0), (r1, c1) = (np.array(spec.cell_of(ring.min(axis=0)[None])).ravel(),
                          np.array(spec.cell_of(ring.max(axis=0)[None])).ravel())
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, spec.height - 1), min(c1, spec.width - 1)
    if r1 < r0 or c1 < c0:
        return np.zeros((0, 2), dtype=np.int64)
    rr, cc = np.mgrid[r0:r1 + 1, c0:c1 + 1]
    centers = spec.center_of(rr.ravel(), cc.ravel())
    px, py = centers[:, 0], centers[:, 1]
    inside = np.zeros(px.shape, dtype=bool)
    x0, y0 = ring[:, 0], ring[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (px < x_cross)
    return np.stack([rr.ravel()[inside], cc.ravel()[inside]], axis=1)


def element_cells(element: MapElement, spec: GridSpec, fill: bool = False) -> np.ndarray:
    geom = element.geometry
    if isinstance(geom, Polygon):
        cells = trace_cells(geom.ring, spec, closed=True)
        if fill:
            cells = np.concatenate([cells, fill_cells(geom.ring, spec)])
        return cells
    return trace_cells(geom.points, spec)


def rasterize(element: MapElement, spec: GridSpec, value: float = 1.0, frame: int = 0) -> HistoryMap:
    """Single-cell-wide trace of the element, touched cells set to ``value``.

    Polygons contribute their boundary ring only. Geometry outside the
    extent is clipped.
    """
    if not (0.0 <= value <= 1.0):
        raise RasterError(f"raster value {value} outside [0, 1]")
    grid = np.zeros(spec.shape)
    cells = element_cells(element, spec)
    grid[cells[:, 0], cells[:, 1]] = value
    return HistoryMap(grid, spec, frame)


def decay_update(
    hmap: HistoryMap, new_raster: HistoryMap, lam: float, mode: str = "max", frame: int | None = None
) -> HistoryMap:
    """Decay ``hmap`` by ``lam`` and fold in ``new_raster``.

    ``mode="max"`` keeps the per-cell maximum; ``mode="add"`` adds and
    clamps to 1.
    """
    if hmap.spec != new_raster.spec:
        raise RasterError("decay_update: grid specs differ")
    if not (0.0 < lam <= 1.0):
        raise RasterError(f"decay factor {lam} outside (0, 1]")
    decayed = lam * hmap.grid
    if mode == "max":
        out = np.maximum(decayed, new_raster.grid)
    elif mode == "add":
        out = np.minimum(decayed + new_raster.grid, 1.0)
    else:
        raise RasterError(f"unknown update mode {mode!r}")
    if frame is None:
        frame = max(hmap.last_update_frame, new_raster.last_update_frame)
    return HistoryMap(out, hmap.spec, frame)


def _snap(v: np.ndarray) -> np.ndarray:
    r = np.round(v)
    return np.where(np.abs(v - r) < _SNAP, r, v)


def bilinear_sample(grid: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``grid`` at fractional cell indices; outside the grid reads 0."""
    h, w = grid.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = grid
    rows = _snap(rows) + 1.0
    cols = _snap(cols) + 1.0
    valid = (rows > -1e-12) & (rows < h + 1) & (cols > -1e-12) & (cols < w + 1)
    rows = np.clip(rows, 0.0, h + 1)
    cols = np.clip(cols, 0.0, w + 1)
    r0 = np.minimum(np.floor(rows).astype(np.int64), h)
    c0 = np.minimum(np.floor(cols).astype(np.int64), w)
    fr = rows - r0
    fc = cols - c0
    out = (
        padded[r0, c0] * (1 - fr) * (1 - fc)
        + padded[r0, c0 + 1] * (1 - fr) * fc
        + padded[r0 + 1, c0] * fr * (1 - fc)
        + padded[r0 + 1, c0 + 1] * fr * fc
    )
    return np.where(valid, out, 0.0)


def warp(hmap: HistoryMap, pose_prev: Pose2, pose_next: Pose2) -> HistoryMap:
    """Re-express a map built in the ``pose_prev`` ego frame in the ``pose_next`` frame.

    Inverse warp: each output cell center is carried through ``pose_next``
    into the world and back through ``pose_prev`` to find where to sample
    the old grid bilinearly.
    """
    spec = hmap.spec
    rel = pose_prev.inverse().compose(pose_next)
    xs, ys = spec.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    src = rel.apply(np.stack([gx.ravel(), gy.ravel()], axis=1))
    cols = (src[:, 0] - spec.x_range[0]) / spec.cell_w - 0.5
    rows = (src[:, 1] - spec.y_range[0]) / spec.cell_h - 0.5
    out = bilinear_sample(hmap.grid, rows, cols).reshape(spec.shape)
    np.clip(out, 0.0, 1.0, out=out)
    return HistoryMap(out, spec, hmap.last_update_frame)


def valid_mask(hmap: HistoryMap, tau_map: float = 0.5) -> ValidMask:
    """Cells whose confidence strictly exceeds ``tau_map``."""
    if not (0.0 <= tau_map <= 1.0):
        raise RasterError(f"tau_map {tau_map} outside [0, 1]")
    rows, cols = np.nonzero(hmap.grid > tau_map)
    return ValidMask(np.stack([rows, cols], axis=1), hmap.spec)


def to_pgm_bytes(grid: np.ndarray) -> bytes:
    """Binary P5 image, top row = largest y."""
    img = np.round(255.0 * np.clip(grid, 0.0, 1.0)).astype(np.uint8)[::-1]
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    # exactly one whitespace byte separates the header from the pixels
    pos += 1
    if tokens[0] != b"P5":
        raise RasterError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    return img[::-1].astype(float) / maxval


def write_pgm(hmap: HistoryMap, path) -> None:
    """Write the grid as PGM plus a ``.json`` spec sidecar."""
    path = Path(path)
    path.write_bytes(to_pgm_bytes(hmap.grid))
    sidecar = {"spec": hmap.spec.to_dict(), "last_update_frame": hmap.last_update_frame}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
