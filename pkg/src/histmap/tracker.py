"""Instance lifecycle bookkeeping over per-track history maps.

Every frame, instances are sorted into born / continued / removed. Births
pass ``tau_det``, continuations pass ``tau_track``, and a live track that
gets no qualifying element in a frame is dropped (no re-identification).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .geometry import Category, MapElement, Pose2
from .raster import GridSpec, HistoryMap, decay_update, rasterize, warp, write_pgm

log = logging.getLogger(__name__)


class TrackerError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    tau_det: float = 0.4
    tau_track: float = 0.5
    lam: float = 0.95
    spec: GridSpec = field(default_factory=GridSpec.default)
    tau_map: float = 0.5
    update_mode: str = "max"
    patience: int = 0

    def __post_init__(self):
        for name in ("tau_det", "tau_map"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise TrackerError(f"{name}={value} outside [0, 1]")
        # tau_track may exceed 1 to force every track to die after birth
        if self.tau_track < 0.0:
            raise TrackerError(f"tau_track={self.tau_track} is negative")
        if not 0.0 < self.lam <= 1.0:
            raise TrackerError(f"lambda={self.lam} outside (0, 1]")
        if self.patience < 0:
            raise TrackerError("patience must be >= 0")
        if self.update_mode not in ("max", "add"):
            raise TrackerError(f"unknown update_mode {self.update_mode!r}")

    def to_dict(self) -> dict:
        return {
            "tau_det": self.tau_det,
            "tau_track": self.tau_track,
            "lambda": self.lam,
            "tau_map": self.tau_map,
            "update_mode": self.update_mode,
            "patience": self.patience,
            "grid": self.spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, spec: Optional[GridSpec] = None) -> "TrackerConfig":
        kwargs = {}
        for key, attr in (("tau_det", "tau_det"), ("tau_track", "tau_track"), ("lambda", "lam"),
                          ("tau_map", "tau_map"), ("update_mode", "update_mode"), ("patience", "patience")):
            if key in d:
                kwargs[attr] = d[key]
        if "grid" in d:
            kwargs["spec"] = GridSpec.from_dict(d["grid"])
        elif spec is not None:
            kwargs["spec"] = spec
        return cls(**kwargs)


@dataclass(frozen=True)
class Observation:
    frame_index: int
    ego_pose: Pose2
    element: MapElement


@dataclass
class TrackState:
    track_id: int
    category: Category
    history: HistoryMap
    last_score: float
    birth_frame: int
    frames_tracked: int = 1
    misses: int = 0
    observations: List[Observation] = field(default_factory=list)


@dataclass(frozen=True)
class FrameObservation:
    elements: Sequence[MapElement]
    ego_pose: Pose2
    frame_index: int


@dataclass(frozen=True)
class TrackerOutput:
    frame_index: int
    born: List[int]
    continued: List[int]
    removed: List[int]
    live_count: int
    # tracker id given to each input element, None when it was filtered out
    assignments: List[Optional[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "born": self.born,
            "continued": self.continued,
            "removed": self.removed,
            "live_count": self.live_count,
        }


@dataclass(frozen=True)
class TrackRecord:
    track_id: int
    category: Category
    observations: List[Observation]

    @property
    def mean_score(self) -> float:
        return sum(o.element.score for o in self.observations) / len(self.observations)


class Tracker:
    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.live: Dict[int, TrackState] = {}
        self.archive: Dict[int, TrackState] = {}
        self._next_id = 0
        self._last_frame: Optional[int] = None
        self._last_pose: Optional[Pose2] = None

    @property
    def n_track(self) -> int:
        return len(self.live)

    def _check(self, obs: FrameObservation) -> None:
        if self._last_frame is not None and obs.frame_index <= self._last_frame:
            raise TrackerError(
                f"frame_index {obs.frame_index} is not after previous frame {self._last_frame}"
            )
        seen = set()
        for el in obs.elements:
            if el.track_id is None:
                continue
            if el.track_id not in self.live:
                raise TrackerError(f"frame {obs.frame_index}: unknown track_id {el.track_id}")
            if el.track_id in seen:
                raise TrackerError(f"frame {obs.frame_index}: track_id {el.track_id} given twice")
            seen.add(el.track_id)

    def step(self, obs: FrameObservation) -> TrackerOutput:
        cfg = self.config
        self._check(obs)
        frame = obs.frame_index

        if self._last_pose is not None:
            for state in self.live.values():
                state.history = warp(state.history, self._last_pose, obs.ego_pose)

        born: List[int] = []
        continued: List[int] = []
        assignments: List[Optional[int]] = []
        for el in obs.elements:
            if el.track_id is None:
                if el.score > cfg.tau_det:
                    tid = self._next_id
                    self._next_id += 1
                    self.live[tid] = TrackState(
                        track_id=tid,
                        category=el.category,
                        history=rasterize(el, cfg.spec, el.score, frame),
                        last_score=el.score,
                        birth_frame=frame,
                        observations=[Observation(frame, obs.ego_pose, el.replace(track_id=tid))],
                    )
                    born.append(tid)
                    assignments.append(tid)
                else:
                    assignments.append(None)
                continue
            state = self.live[el.track_id]
            if el.score > cfg.tau_track:
                state.history = decay_update(
                    state.history, rasterize(el, cfg.spec, el.score, frame), cfg.lam, cfg.update_mode, frame
                )
                state.last_score = el.score
                state.frames_tracked += 1
                state.misses = 0
                state.observations.append(Observation(frame, obs.ego_pose, el))
                continued.append(el.track_id)
                assignments.append(el.track_id)
            else:
                assignments.append(None)

        kept = set(born) | set(continued)
        removed: List[int] = []
        for tid in sorted(self.live):
            if tid in kept:
                continue
            state = self.live[tid]
            state.misses += 1
            if state.misses > cfg.patience:
                removed.append(tid)
            else:
                state.history = decay_update(
                    state.history, HistoryMap.empty(cfg.spec, frame), cfg.lam, cfg.update_mode, frame
                )
        for tid in removed:
            self.archive[tid] = self.live.pop(tid)

        self._last_frame = frame
        self._last_pose = obs.ego_pose
        log.debug("frame %d: born=%s continued=%s removed=%s", frame, born, continued, removed)
        return TrackerOutput(frame, born, continued, removed, len(self.live), assignments)

    def export_tracks(self) -> List[TrackRecord]:
        """Every track ever created, live or removed, ordered by id."""
        states = {**self.archive, **self.live}
        return [
            TrackRecord(tid, states[tid].category, list(states[tid].observations))
            for tid in sorted(states)
        ]

    def snapshot(self) -> dict:
        def summary(s: TrackState) -> dict:
            return {
                "track_id": s.track_id,
                "category": s.category.value,
                "last_score": s.last_score,
                "birth_frame": s.birth_frame,
                "frames_tracked": s.frames_tracked,
                "last_update_frame": s.history.last_update_frame,
            }

        return {
            "frame_index": self._last_frame,
            "config": self.config.to_dict(),
            "live": [summary(self.live[t]) for t in sorted(self.live)],
            "archived": [summary(self.archive[t]) for t in sorted(self.archive)],
        }

    def dump_rasters(self, directory) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for tid in sorted(self.live):
            path = directory / f"track_{tid:05d}.pgm"
            write_pgm(self.live[tid].history, path)
            paths.append(path)
        return paths


class QueryAssociator:
    """Feeds elements carrying external query ids into a :class:`Tracker`.

    An external id that currently maps to a live track is passed through as
    that track's id; any other id is treated as a fresh detection. Mappings
    die with their track, so an id that reappears later starts a new track.
    """

    def __init__(self, tracker: Tracker):
        self.tracker = tracker
        self._to_track: Dict[int, int] = {}

    def step(self, elements: Sequence[MapElement], ego_pose: Pose2, frame_index: int) -> TrackerOutput:
        ext_ids = [el.track_id for el in elements]
        dupes = {i for i in ext_ids if i is not None and ext_ids.count(i) > 1}
        if dupes:
            raise TrackerError(f"frame {frame_index}: duplicate query ids {sorted(dupes)}")
        mapped = []
        for el in elements:
            tid = self._to_track.get(el.track_id) if el.track_id is not None else None
            if tid is not None and tid not in self.tracker.live:
                tid = None
            mapped.append(el.replace(track_id=tid))
        out = self.tracker.step(FrameObservation(mapped, ego_pose, frame_index))
        for ext, tid in zip(ext_ids, out.assignments):
            if ext is not None and tid is not None:
                self._to_track[ext] = tid
        dead = set(out.removed)
        self._to_track = {e: t for e, t in self._to_track.items() if t not in dead}
        return out
