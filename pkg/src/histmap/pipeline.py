"""End-to-end workflows shared by the CLI and the acceptance suite."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

from .geometry import MapElement
from .io import SceneFrame, SceneHeader
from .metrics import EvalReport, g_map, global_grid, merge_predictions, raster_global_gt, sequence_frame_map
from .metrics.globaleval import GlobalEvalError
from .raster import GridSpec, HistoryMap, decay_update, rasterize, warp
from .simkit import PerturbationModel, Scenario, ScenarioSpec, generate, simulate_frames
from .tracker import QueryAssociator, Tracker, TrackerConfig, TrackerOutput, TrackRecord


def simulate_scene(spec: ScenarioSpec, model: PerturbationModel, seed: int) -> Tuple[SceneHeader, List[SceneFrame]]:
    scenario = generate(spec, seed)
    return scene_from_scenario(scenario, model)


def scene_from_scenario(scenario: Scenario, model: PerturbationModel) -> Tuple[SceneHeader, List[SceneFrame]]:
    header = SceneHeader(
        scenario.spec.bev,
        seed=scenario.seed,
        meta={"scenario": scenario.spec.to_dict(), "perturbation": model.to_dict()},
    )
    frames = [SceneFrame(k, pose, gt, preds) for k, pose, gt, preds in simulate_frames(scenario, model)]
    return header, frames


def track_scene(frames: Sequence[SceneFrame], config: TrackerConfig) -> Tuple[Tracker, List[TrackerOutput]]:
    tracker = Tracker(config)
    assoc = QueryAssociator(tracker)
    outputs = []
    for frame in frames:
        outputs.append(assoc.step(frame.pred or [], frame.ego_pose, frame.frame_index))
    return tracker, outputs


def predictions_by_frame(records: Sequence[TrackRecord]) -> Dict[int, List[MapElement]]:
    out: Dict[int, List[MapElement]] = {}
    for rec in records:
        for obs in rec.observations:
            out.setdefault(obs.frame_index, []).append(obs.element)
    return out


def evaluate_frames(frames: Sequence[SceneFrame], records: Optional[Sequence[TrackRecord]] = None,
                    **kwargs) -> EvalReport:
    """Per-frame mAP of tracked outputs (or raw scene predictions when no tracks are given)."""
    if records is not None:
        by_frame = predictions_by_frame(records)
        triples = [(f.frame_index, by_frame.get(f.frame_index, []), f.gt) for f in frames]
    else:
        triples = [(f.frame_index, f.pred or [], f.gt) for f in frames]
    return sequence_frame_map(triples, **kwargs)


def evaluate_global(frames: Sequence[SceneFrame], records: Sequence[TrackRecord], bev: GridSpec,
                    resolution: float = 0.3, margin: float = 15.0, **kwargs) -> EvalReport:
    if not frames:
        raise GlobalEvalError("empty sequence")
    for f in frames:
        if any(e.track_id is None for e in f.gt):
            raise GlobalEvalError(f"frame {f.frame_index}: GT element without a global id")
    grid = global_grid([f.ego_pose for f in frames], bev, resolution, margin)
    gt = raster_global_gt([(f.gt, f.ego_pose) for f in frames], bev, grid=grid)
    pred = merge_predictions(records, grid)
    return g_map(pred, gt, **kwargs)


def replay_history(record: TrackRecord, config: TrackerConfig) -> HistoryMap:
    """Rebuild a track's final history map from its exported observations."""
    obs = record.observations
    first = obs[0]
    hmap = rasterize(first.element, config.spec, first.element.score, first.frame_index)
    prev = first
    for o in obs[1:]:
        hmap = warp(hmap, prev.ego_pose, o.ego_pose)
        # frames skipped under patience decay once each
        for _ in range(o.frame_index - prev.frame_index - 1):
            hmap = decay_update(hmap, HistoryMap.empty(config.spec), config.lam, config.update_mode)
        hmap = decay_update(hmap, rasterize(o.element, config.spec, o.element.score, o.frame_index),
                            config.lam, config.update_mode, o.frame_index)
        prev = o
    return hmap
