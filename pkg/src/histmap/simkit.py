"""Synthetic driving sequences with analytically known ground truth.

A scenario is a road centerline (straight, one 90 degree turn, or a closed
loop) driven at a fixed step per frame, with lane dividers and road
boundaries laid as lateral offsets of the centerline and pedestrian
crossings as rectangles across it. Per-frame GT is the ego-frame crop of
that global map; predictions are controlled perturbations of the crop.

Randomness comes from numpy's PCG64 generator. Every random quantity is
drawn from a child stream keyed by ``(seed, frame, instance)`` so that
changing one perturbation parameter never shifts the draws seen by another.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import Category, GeometryError, MapElement, Polygon, Polyline, Pose2, drop_repeated
from .raster import GridSpec

TRAJECTORIES = ("straight", "turn", "loop")
_ELEMENT_STEP = 2.0
_FP_KEY = 2**31 - 1
FRESH_ID_BASE = 1_000_000


class ScenarioError(ValueError):
    pass


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


@dataclass(frozen=True)
class ScenarioSpec:
    n_frames: int = 50
    trajectory: str = "straight"
    n_dividers: int = 2
    n_boundaries: int = 2
    n_pedestrians: int = 2
    step: float = 2.0
    bev: GridSpec = field(default_factory=GridSpec.default)

    def __post_init__(self):
        if self.trajectory not in TRAJECTORIES:
            raise ScenarioError(f"unknown trajectory {self.trajectory!r}; expected one of {TRAJECTORIES}")
        if self.n_frames < 1:
            raise ScenarioError("n_frames must be >= 1")
        if not self.step > 0 and self.n_frames > 1:
            raise ScenarioError("zero-length trajectory")
        if self.trajectory == "loop" and self.n_frames < 8:
            raise ScenarioError("a loop needs at least 8 frames")
        for name in ("n_dividers", "n_boundaries", "n_pedestrians"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")

    @property
    def path_length(self) -> float:
        return (self.n_frames - 1) * self.step

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bev"] = self.bev.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "bev" in d:
            d["bev"] = GridSpec.from_dict(d["bev"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    seed: int
    elements: Tuple[MapElement, ...]
    poses: Tuple[Pose2, ...]

    def gt_ids(self) -> List[int]:
        return [e.track_id for e in self.elements]


class _Centerline:
    """Piecewise straight/arc path parametrized by arc length."""

    def __init__(self, origin: Pose2, pieces: Sequence[Tuple[float, float]], lead_in: float = 0.0):
        # pieces: (length, curvature); the path starts lead_in meters before origin
        self.lead_in = lead_in
        self.pieces = list(pieces)
        starts = []
        state = origin.compose(Pose2(-lead_in, 0.0, 0.0))
        s = -lead_in
        for length, kappa in self.pieces:
            starts.append((s, state))
            state = state.compose(self._advance(length, kappa))
            s += length
        self.starts = starts
        self.end = s

    @staticmethod
    def _advance(ds: float, kappa: float) -> Pose2:
        if abs(kappa) < 1e-12:
            return Pose2(ds, 0.0, 0.0)
        phi = kappa * ds
        return Pose2(math.sin(phi) / kappa, (1.0 - math.cos(phi)) / kappa, phi)

    def pose(self, s: float) -> Pose2:
        for (s0, state), (length, kappa) in zip(reversed(self.starts), reversed(self.pieces)):
            if s >= s0 or s0 == self.starts[0][0]:
                return state.compose(self._advance(s - s0, kappa))
        raise AssertionError("unreachable")

    def offset_points(self, s0: float, s1: float, lateral: float) -> np.ndarray:
        n = max(2, int(math.ceil((s1 - s0) / _ELEMENT_STEP)) + 1)
        pts = [self.pose(s).apply([[0.0, lateral]])[0] for s in np.linspace(s0, s1, n)]
        return np.array(pts)


def _centerline(spec: ScenarioSpec, rng: np.random.Generator) -> _Centerline:
    origin = Pose2(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-math.pi, math.pi))
    total = spec.path_length
    reach = spec.bev.x_range[1] - spec.bev.x_range[0]
    if spec.trajectory == "straight":
        return _Centerline(origin, [(total + 2 * reach, 0.0)], lead_in=reach)
    if spec.trajectory == "turn":
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        arc = 0.3 * total
        kappa = side * (math.pi / 2) / arc
        return _Centerline(
            origin, [(reach + 0.35 * total, 0.0), (arc, kappa), (0.35 * total + reach, 0.0)], lead_in=reach
        )
    return _Centerline(origin, [(total, 2 * math.pi / total)])


def _lateral_slots(kind: Category, trajectory: str, count: int, rng: np.random.Generator) -> List[float]:
    if kind is Category.DIVIDER:
        base = [1.75, -1.75, 5.25, -5.25, 3.5, -3.5]
    else:
        base = [-9.5, 9.5, -12.0, 12.0, -14.0, 14.0]
    if trajectory == "loop":
        # stay on the outside of a left-hand loop
        base = sorted({-abs(b) for b in base}, reverse=True)
    slots = [base[i % len(base)] + (i // len(base)) * -1.0 for i in range(count)]
    return [s + rng.uniform(-0.25, 0.25) for s in slots]


def _place_elements(spec: ScenarioSpec, line: _Centerline, rng: np.random.Generator) -> List[MapElement]:
    total = spec.path_length
    reach = spec.bev.x_range[1] - spec.bev.x_range[0]
    loop = spec.trajectory == "loop"
    elements: List[MapElement] = []
    gid = 0
    for kind, count in ((Category.DIVIDER, spec.n_dividers), (Category.BOUNDARY, spec.n_boundaries)):
        for lateral in _lateral_slots(kind, spec.trajectory, count, rng):
            if loop:
                span = rng.uniform(0.2, 0.35) * total
                s0 = rng.uniform(0.3, 0.65 - span / total) * total
                s1 = s0 + span
            else:
                s0, s1 = -0.5 * reach, total + 0.5 * reach
            pts = line.offset_points(s0, s1, lateral)
            elements.append(MapElement(Polyline(pts), kind, 1.0, gid))
            gid += 1
    lo, hi = (0.3 * total, 0.7 * total) if loop else (0.1 * total, 0.9 * total)
    stations: List[float] = []
    for _ in range(spec.n_pedestrians):
        for _attempt in range(100):
            s = rng.uniform(lo, hi) if hi > lo else lo
            if all(abs(s - t) >= 10.0 for t in stations) or hi - lo < 10.0 * spec.n_pedestrians:
                break
        stations.append(s)
        half_w, half_l = 2.0, rng.uniform(6.0, 8.0)
        corners = [[-half_w, -half_l], [half_w, -half_l], [half_w, half_l], [-half_w, half_l]]
        ring = line.pose(s).apply(corners)
        elements.append(MapElement(Polygon(ring), Category.PEDESTRIAN, 1.0, gid))
        gid += 1
    return elements


def _trajectory(spec: ScenarioSpec, line: _Centerline) -> List[Pose2]:
    return [line.pose(k * spec.step) for k in range(spec.n_frames)]


def _clip_polyline(points: np.ndarray, extent) -> Optional[np.ndarray]:
    clipped = LineString(points).intersection(extent)
    parts = [g for g in getattr(clipped, "geoms", [clipped]) if g.geom_type == "LineString" and g.length > 0]
    if not parts:
        return None
    # an exit and re-entry leaves several pieces; keep the longest
    best = max(parts, key=lambda g: g.length)
    pts = drop_repeated(np.asarray(best.coords))
    return pts if len(pts) >= 2 else None


def _clip_polygon(ring: np.ndarray, extent) -> Optional[np.ndarray]:
    clipped = ShapelyPolygon(ring).intersection(extent)
    parts = [g for g in getattr(clipped, "geoms", [clipped]) if g.geom_type == "Polygon" and g.area > 1e-6]
    if not parts:
        return None
    best = max(parts, key=lambda g: g.area)
    pts = drop_repeated(np.asarray(best.exterior.coords)[:-1])
    return pts if len(pts) >= 3 else None


def crop_elements(elements: Sequence[MapElement], pose: Pose2, bev: GridSpec) -> List[MapElement]:
    """Express global elements in the ego frame and clip them to the BEV box."""
    extent = shapely.box(bev.x_range[0], bev.y_range[0], bev.x_range[1], bev.y_range[1])
    to_ego = pose.inverse()
    out = []
    for el in elements:
        local = to_ego.apply(el.points)
        if el.category.is_polygon:
            pts = _clip_polygon(local, extent)
        else:
            pts = _clip_polyline(local, extent)
        if pts is None:
            continue
        try:
            out.append(el.with_geometry(pts))
        except GeometryError:
            continue
    return out


def crop_frame(scenario: Scenario, frame_index: int) -> Tuple[List[MapElement], Pose2]:
    if not 0 <= frame_index < len(scenario.poses):
        raise IndexError(f"frame {frame_index} outside 0..{len(scenario.poses) - 1}")
    pose = scenario.poses[frame_index]
    return crop_elements(scenario.elements, pose, scenario.spec.bev), pose


def _contiguous(frames: List[int], n: int, cyclic: bool) -> bool:
    if not frames:
        return False
    if frames[-1] - frames[0] + 1 == len(frames):
        return True
    if not cyclic:
        return False
    # one wrap-around gap is allowed: the run continues past the last frame into frame 0
    gaps = [b - a for a, b in zip(frames, frames[1:]) if b - a > 1]
    return len(gaps) == 1 and frames[0] == 0 and frames[-1] == n - 1


def _visibility_ok(elements: Sequence[MapElement], poses: Sequence[Pose2], bev: GridSpec,
                   cyclic: bool = False) -> bool:
    seen: Dict[int, List[int]] = {e.track_id: [] for e in elements}
    for k, pose in enumerate(poses):
        for el in crop_elements(elements, pose, bev):
            seen[el.track_id].append(k)
    return all(_contiguous(frames, len(poses), cyclic) for frames in seen.values())


def generate(spec: ScenarioSpec, seed: int, max_attempts: int = 50) -> Scenario:
    """Build a scenario where each GT instance is visible over one unbroken frame range.

    On a loop the range may wrap around the loop closure when no strict placement
    is found within ``max_attempts``.
    """
    if spec.n_frames > 1 and not spec.path_length > 0:
        raise ScenarioError("zero-length trajectory")
    for attempt in range(max_attempts):
        rng = _rng(seed, attempt)
        line = _centerline(spec, rng)
        poses = _trajectory(spec, line)
        elements = _place_elements(spec, line, rng)
        if _visibility_ok(elements, poses, spec.bev):
            return Scenario(spec, seed, tuple(elements), tuple(poses))
    if spec.trajectory == "loop":
        # A short loop keeps its far side in view, and the closing pose equals the
        # first one, so strict contiguity can be out of reach. Accept a run that
        # wraps around the loop closure instead.
        for attempt in range(max_attempts):
            rng = _rng(seed, attempt)
            line = _centerline(spec, rng)
            poses = _trajectory(spec, line)
            elements = _place_elements(spec, line, rng)
            if _visibility_ok(elements, poses, spec.bev, cyclic=True):
                return Scenario(spec, seed, tuple(elements), tuple(poses))
    raise ScenarioError(f"could not place elements with contiguous visibility after {max_attempts} attempts")


@dataclass(frozen=True)
class PerturbationModel:
    jitter: float = 0.0
    score_noise: float = 0.0
    dropout: float = 0.0
    fp_rate: float = 0.0
    id_switch: float = 0.0

    def __post_init__(self):
        for name in ("jitter", "score_noise", "fp_rate"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")
        for name in ("dropout", "id_switch"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _jitter_element(el: MapElement, noise: np.ndarray, sigma: float) -> Optional[MapElement]:
    pts = el.points + sigma * noise
    if el.category.is_polygon:
        try:
            return el.with_geometry(pts)
        except GeometryError:
            hull = shapely.MultiPoint(pts).convex_hull
            if hull.geom_type != "Polygon":
                return None
            return el.with_geometry(np.asarray(hull.exterior.coords)[:-1])
    pts = drop_repeated(pts)
    if len(pts) < 2:
        return None
    return el.with_geometry(pts)


def _false_positive(rng: np.random.Generator, bev: GridSpec, ext_id: int) -> MapElement:
    cat = Category.DIVIDER if rng.uniform() < 0.5 else Category.BOUNDARY
    cx = rng.uniform(bev.x_range[0] + 2, bev.x_range[1] - 2)
    cy = rng.uniform(bev.y_range[0] + 2, bev.y_range[1] - 2)
    heading = rng.uniform(-math.pi, math.pi)
    length = rng.uniform(3.0, 8.0)
    bend = rng.uniform(-0.5, 0.5)
    local = np.array([[-length / 2, 0.0], [0.0, bend], [length / 2, 0.0]])
    pts = Pose2(cx, cy, heading).apply(local)
    lo = np.array([bev.x_range[0], bev.y_range[0]])
    hi = np.array([bev.x_range[1], bev.y_range[1]])
    pts = np.clip(pts, lo + 1e-6, hi - 1e-6)
    score = float(rng.uniform(0.45, 0.95))
    return MapElement(Polyline(drop_repeated(pts)), cat, score, ext_id)


class Perturber:
    """Turns per-frame GT into predictions carrying query ids.

    Query ids start equal to GT ids; an id switch hands the instance a fresh
    id that it keeps afterwards.
    """

    def __init__(self, model: PerturbationModel, seed: int, bev: Optional[GridSpec] = None):
        self.model = model
        self.seed = seed
        self.bev = bev or GridSpec.default()
        self._ids: Dict[int, int] = {}
        self._next_fresh = FRESH_ID_BASE

    def _fresh(self) -> int:
        fid = self._next_fresh
        self._next_fresh += 1
        return fid

    def __call__(self, frame_gt: Sequence[MapElement], frame_index: int) -> List[MapElement]:
        m = self.model
        preds: List[MapElement] = []
        for el in sorted(frame_gt, key=lambda e: e.track_id):
            rng = _rng(self.seed, frame_index, 0, el.track_id)
            u_drop, u_switch, z_score = rng.uniform(), rng.uniform(), rng.standard_normal()
            noise = rng.standard_normal(el.points.shape)
            if u_switch < m.id_switch:
                self._ids[el.track_id] = self._fresh()
            ext = self._ids.setdefault(el.track_id, el.track_id)
            if u_drop < m.dropout:
                continue
            moved = _jitter_element(el, noise, m.jitter)
            if moved is None:
                continue
            score = min(1.0, max(0.0, 1.0 - abs(m.score_noise * z_score)))
            preds.append(moved.replace(score=score, track_id=ext))
        if m.fp_rate > 0:
            rng = _rng(self.seed, frame_index, 1, _FP_KEY)
            for _ in range(int(rng.poisson(m.fp_rate))):
                preds.append(_false_positive(rng, self.bev, self._fresh()))
        return preds


def perturb(frame_gt: Sequence[MapElement], model: PerturbationModel, seed: int, frame_index: int = 0,
            bev: Optional[GridSpec] = None) -> List[MapElement]:
    """Single-frame predictions; id switches only last for this call."""
    return Perturber(model, seed, bev)(frame_gt, frame_index)


def simulate_frames(scenario: Scenario, model: PerturbationModel, seed: Optional[int] = None):
    """Yield ``(frame_index, pose, gt, preds)`` for the whole sequence."""
    perturber = Perturber(model, scenario.seed if seed is None else seed, scenario.spec.bev)
    for k in range(len(scenario.poses)):
        gt, pose = crop_frame(scenario, k)
        yield k, pose, gt, perturber(gt, k)
