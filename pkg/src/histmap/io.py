"""Scene and track JSONL files.

A scene file is a header record followed by one record per frame. A tracks
file is a header followed by one record per track. See ``docs/format.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import CATEGORIES, Category, GeometryError, MapElement, Pose2, drop_repeated, make_element
from .raster import GridSpec
from .tracker import Observation, TrackRecord

SCENE_VERSION = 1
TRACKS_VERSION = 1
_DIGITS = 6


class FormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _round_points(points) -> list:
    pts = np.round(np.asarray(points, dtype=float), _DIGITS) + 0.0
    return drop_repeated(pts, tol=0.0).tolist()


def _round_pose(pose: Pose2) -> dict:
    return {k: round(v, 9) + 0.0 for k, v in pose.to_dict().items()}


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=True)


def element_record(el: MapElement, id_key: str = "track_id", with_score: bool = True) -> dict:
    rec = {"category": el.category.value, "points": _round_points(el.points)}
    if el.track_id is not None:
        rec[id_key] = int(el.track_id)
    if with_score:
        rec["score"] = round(float(el.score), _DIGITS)
    return rec


def parse_element(rec: dict, id_key: str = "track_id") -> MapElement:
    try:
        cat = Category(rec["category"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad category {rec.get('category')!r}") from exc
    if "points" not in rec:
        raise ValueError("element without points")
    ident = rec.get(id_key)
    if ident is not None and (not isinstance(ident, int) or ident < 0):
        raise ValueError(f"{id_key} must be a non-negative integer")
    return make_element(rec["points"], cat, float(rec.get("score", 1.0)), ident)


@dataclass
class SceneHeader:
    bev: GridSpec
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)
    version: int = SCENE_VERSION

    def to_record(self) -> dict:
        return {
            "type": "header",
            "version": self.version,
            "bev": self.bev.to_dict(),
            "categories": [c.value for c in CATEGORIES],
            "seed": self.seed,
            "meta": self.meta,
        }


@dataclass
class SceneFrame:
    frame_index: int
    ego_pose: Pose2
    gt: List[MapElement]
    pred: Optional[List[MapElement]] = None

    def to_record(self) -> dict:
        rec = {
            "type": "frame",
            "frame_index": self.frame_index,
            "ego_pose": _round_pose(self.ego_pose),
            "gt": [element_record(e, "id", with_score=False) for e in self.gt],
        }
        if self.pred is not None:
            rec["pred"] = [element_record(e) for e in self.pred]
        return rec


def write_scene(path, header: SceneHeader, frames: Sequence[SceneFrame]) -> None:
    lines = [dumps(header.to_record())] + [dumps(f.to_record()) for f in frames]
    Path(path).write_text("\n".join(lines) + "\n")


def _records(path) -> Iterator[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise FormatError(path, lineno, "record is not a JSON object")
            yield lineno, rec


def read_scene(path) -> Tuple[SceneHeader, List[SceneFrame]]:
    header: Optional[SceneHeader] = None
    frames: List[SceneFrame] = []
    for lineno, rec in _records(path):
        if header is None:
            if rec.get("type") != "header":
                raise FormatError(path, lineno, "first record must be the header")
            if rec.get("version") != SCENE_VERSION:
                raise FormatError(path, lineno, f"unsupported scene version {rec.get('version')!r}")
            try:
                header = SceneHeader(GridSpec.from_dict(rec["bev"]), rec.get("seed"), rec.get("meta", {}))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(path, lineno, f"bad header: {exc}") from None
            continue
        if rec.get("type") != "frame":
            raise FormatError(path, lineno, f"expected a frame record, got type {rec.get('type')!r}")
        try:
            idx = rec["frame_index"]
            if not isinstance(idx, int):
                raise ValueError("frame_index must be an integer")
            pose = Pose2.from_dict(rec["ego_pose"])
            gt = [parse_element(e, "id") for e in rec.get("gt", [])]
            pred = None if "pred" not in rec else [parse_element(e) for e in rec["pred"]]
        except (KeyError, TypeError, ValueError, GeometryError) as exc:
            raise FormatError(path, lineno, str(exc)) from None
        if frames and idx <= frames[-1].frame_index:
            raise FormatError(path, lineno, f"frame_index {idx} is not increasing")
        frames.append(SceneFrame(idx, pose, gt, pred))
    if header is None:
        raise FormatError(path, 1, "empty scene file")
    return header, frames


def write_tracks(path, records: Sequence[TrackRecord], config: dict) -> None:
    lines = [dumps({"type": "tracks_header", "version": TRACKS_VERSION, "config": config})]
    for rec in records:
        lines.append(dumps({
            "type": "track",
            "track_id": rec.track_id,
            "category": rec.category.value,
            "observations": [
                {
                    "frame_index": o.frame_index,
                    "ego_pose": _round_pose(o.ego_pose),
                    "score": round(float(o.element.score), _DIGITS),
                    "points": _round_points(o.element.points),
                }
                for o in rec.observations
            ],
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_tracks(path) -> Tuple[dict, List[TrackRecord]]:
    config: Optional[dict] = None
    records: List[TrackRecord] = []
    for lineno, rec in _records(path):
        if config is None:
            if rec.get("type") != "tracks_header" or rec.get("version") != TRACKS_VERSION:
                raise FormatError(path, lineno, "first record must be a version 1 tracks_header")
            config = rec.get("config", {})
            continue
        try:
            tid = int(rec["track_id"])
            cat = Category(rec["category"])
            obs = []
            for o in rec["observations"]:
                el = make_element(o["points"], cat, float(o["score"]), tid)
                obs.append(Observation(int(o["frame_index"]), Pose2.from_dict(o["ego_pose"]), el))
        except (KeyError, TypeError, ValueError, GeometryError) as exc:
            raise FormatError(path, lineno, str(exc)) from None
        records.append(TrackRecord(tid, cat, obs))
    if config is None:
        raise FormatError(path, 1, "empty tracks file")
    return config, records


def write_jsonl(path, header: dict, rows: Sequence[dict]) -> None:
    Path(path).write_text("\n".join(dumps(r) for r in [header, *rows]) + "\n")
