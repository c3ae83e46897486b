"""2D geometric primitives: poses, polylines, polygons and map elements.

All coordinates are meters, all angles radians. Every type here is an
immutable value; numpy arrays held by them are marked read-only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

_CROSS_EPS = 1e-12


class GeometryError(ValueError):
    """Raised when a geometric value violates its invariants."""


def _frozen(points) -> np.ndarray:
    arr = np.array(points, dtype=float).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose2:
    """SE(2) pose: maps local points p to ``R(theta) @ p + (x, y)``."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise GeometryError(f"non-finite pose {self}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = self.translation
        return m

    def compose(self, other: "Pose2") -> "Pose2":
        """Return ``self * other``: apply ``other`` first, then ``self``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        out = np.empty_like(pts)
        out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + self.x
        out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + self.y
        return out

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose2":
        return cls(float(d["x"]), float(d["y"]), float(d["theta"]))


def compose(a: Pose2, b: Pose2) -> Pose2:
    return a.compose(b)


def _check_points(pts: np.ndarray, minimum: int, kind: str) -> None:
    if pts.shape[0] < minimum:
        raise GeometryError(f"{kind} needs at least {minimum} points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError(f"{kind} has non-finite coordinates")


@dataclass(frozen=True)
class Polyline:
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        _check_points(pts, 2, "polyline")
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(steps == 0.0):
            raise GeometryError("polyline has consecutive duplicate points")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Polyline) and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1])


def _segments_cross(p1, p2, q1, q2) -> bool:
    """True when closed segments p1p2 and q1q2 intersect."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) <= _CROSS_EPS:
            return 0
        return 1 if v > 0 else -1

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - _CROSS_EPS <= c[0] <= max(a[0], b[0]) + _CROSS_EPS
            and min(a[1], b[1]) - _CROSS_EPS <= c[1] <= max(a[1], b[1]) + _CROSS_EPS
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4):
        return True
    if o1 == 0 and on_segment(p1, p2, q1):
        return True
    if o2 == 0 and on_segment(p1, p2, q2):
        return True
    if o3 == 0 and on_segment(q1, q2, p1):
        return True
    if o4 == 0 and on_segment(q1, q2, p2):
        return True
    return False


def ring_self_intersects(ring: np.ndarray) -> bool:
    n = ring.shape[0]
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share an endpoint by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(a1, a2, ring[j], ring[(j + 1) % n]):
                return True
    return False


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; the ring is implicitly closed (last != first)."""

    ring: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.ring)
        if pts.shape[0] >= 2 and np.array_equal(pts[0], pts[-1]):
            pts = _frozen(pts[:-1])
        _check_points(pts, 3, "polygon")
        if signed_area(pts) == 0.0:
            raise GeometryError("polygon has zero area")
        if ring_self_intersects(pts):
            raise GeometryError("polygon ring self-intersects")
        object.__setattr__(self, "ring", pts)

    def __len__(self) -> int:
        return self.ring.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Polygon) and np.array_equal(self.ring, other.ring)

    __hash__ = None

    @property
    def area(self) -> float:
        return abs(signed_area(self.ring))

    @property
    def points(self) -> np.ndarray:
        return self.ring

    def boundary(self) -> Polyline:
        """Closed boundary as a polyline (first vertex repeated at the end)."""
        return Polyline(np.vstack([self.ring, self.ring[:1]]))


Geometry = Union[Polyline, Polygon]


class Category(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    DIVIDER = "divider"
    BOUNDARY = "boundary"

    @property
    def is_polygon(self) -> bool:
        return self is Category.PEDESTRIAN


CATEGORIES = (Category.PEDESTRIAN, Category.DIVIDER, Category.BOUNDARY)


@dataclass(frozen=True)
class MapElement:
    geometry: Geometry
    category: Category
    score: float = 1.0
    track_id: Optional[int] = None

    def __post_init__(self):
        cat = Category(self.category)
        object.__setattr__(self, "category", cat)
        if cat.is_polygon and not isinstance(self.geometry, Polygon):
            raise GeometryError("pedestrian elements must be polygons")
        if not cat.is_polygon and not isinstance(self.geometry, Polyline):
            raise GeometryError(f"{cat.value} elements must be polylines")
        if not (0.0 <= self.score <= 1.0):
            raise GeometryError(f"score {self.score} outside [0, 1]")
        if self.track_id is not None and (int(self.track_id) != self.track_id or self.track_id < 0):
            raise GeometryError(f"track_id must be a non-negative integer, got {self.track_id}")

    @property
    def points(self) -> np.ndarray:
        return self.geometry.points

    def with_geometry(self, points) -> "MapElement":
        geom = Polygon(points) if self.category.is_polygon else Polyline(points)
        return MapElement(geom, self.category, self.score, self.track_id)

    def replace(self, **changes) -> "MapElement":
        fields = dict(geometry=self.geometry, category=self.category, score=self.score, track_id=self.track_id)
        fields.update(changes)
        return MapElement(**fields)

    def as_polyline(self) -> Polyline:
        """Polyline view used by distance metrics; polygons give their closed ring."""
        if isinstance(self.geometry, Polygon):
            return self.geometry.boundary()
        return self.geometry


def make_element(points, category, score: float = 1.0, track_id: Optional[int] = None) -> MapElement:
    cat = Category(category)
    geom = Polygon(points) if cat.is_polygon else Polyline(points)
    return MapElement(geom, cat, score, track_id)


def transform(element: MapElement, pose: Pose2) -> MapElement:
    """Map every point of ``element`` through ``pose``."""
    return element.with_geometry(pose.apply(element.points))


def drop_repeated(points, tol: float = 1e-9) -> np.ndarray:
    """Remove consecutive points closer than ``tol``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return pts
    keep = [0]
    for i in range(1, pts.shape[0]):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > tol:
            keep.append(i)
    return pts[keep]


def cumulative_length(points: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def interpolate_at(points: np.ndarray, stations: np.ndarray) -> np.ndarray:
    """Points at the given arc-length stations along a polyline."""
    cum = cumulative_length(points)
    idx = np.searchsorted(cum, stations, side="right") - 1
    idx = np.clip(idx, 0, len(points) - 2)
    seg = cum[idx + 1] - cum[idx]
    t = np.where(seg > 0, (stations - cum[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)[:, None]
    return points[idx] * (1.0 - t) + points[idx + 1] * t


def resample_points(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if n < 2:
        raise GeometryError(f"resample needs n >= 2, got {n}")
    cum = cumulative_length(pts)
    total = cum[-1]
    if not total > 0.0:
        raise GeometryError("cannot resample a zero-length line")
    out = interpolate_at(pts, np.linspace(0.0, total, n))
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def resample(line: Polyline, n: int) -> Polyline:
    """``n`` points equally spaced by arc length; endpoints kept exactly."""
    return Polyline(resample_points(line.points, n))


def _mean_nearest(a: np.ndarray, b: np.ndarray) -> float:
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return float(d.min(axis=1).mean())


def chamfer_points(a: np.ndarray, b: np.ndarray, directional: bool = False) -> float:
    """Chamfer distance between two point sets.

    Symmetric mean of the two mean nearest-neighbor distances, or only
    ``a -> b`` when ``directional`` is set.
    """
    ab = _mean_nearest(a, b)
    if directional:
        return ab
    return 0.5 * (ab + _mean_nearest(b, a))


def chamfer(a: Polyline, b: Polyline, n_samples: int = 100, directional: bool = False) -> float:
    return chamfer_points(
        resample_points(a.points, n_samples), resample_points(b.points, n_samples), directional
    )
