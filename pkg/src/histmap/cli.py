"""``histmap`` command line: simulate, track, eval, render.

Commands talk to each other only through files::

    histmap simulate --seed 3 --out scene.jsonl
    histmap track scene.jsonl --out tracks.jsonl
    histmap eval scene.jsonl tracks.jsonl --mode global --out report.json
    histmap render scene.jsonl --tracks tracks.jsonl --out-dir render/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .geometry import GeometryError
from .io import FormatError, SceneFrame, SceneHeader, dumps, read_scene, read_tracks, write_jsonl, write_scene, write_tracks
from .metrics import GlobalEvalError
from .metrics.report import EvalReport
from .pipeline import evaluate_frames, evaluate_global, simulate_scene, track_scene
from .raster import GridSpec, RasterError
from .simkit import PerturbationModel, ScenarioError, ScenarioSpec
from .tracker import TrackerConfig, TrackerError

log = logging.getLogger("histmap")

_EVAL_KEYS = ("thresholds", "tau_dis", "tau_valid", "iou_thresholds", "n_samples", "directional",
              "resolution", "margin")


class CliError(Exception):
    pass


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: expected a JSON object")
    return data


def _scenario_inputs(args) -> tuple:
    spec_doc = _load_json(args.spec)
    scen = dict(spec_doc.get("scenario", {k: v for k, v in spec_doc.items() if k != "perturbation"}))
    pert = dict(spec_doc.get("perturbation", {}))
    for flag, key in (("frames", "n_frames"), ("trajectory", "trajectory")):
        if getattr(args, flag) is not None:
            scen[key] = getattr(args, flag)
    for key in ("jitter", "score_noise", "dropout", "fp_rate", "id_switch"):
        if getattr(args, key) is not None:
            pert[key] = getattr(args, key)
    try:
        return ScenarioSpec.from_dict(scen), PerturbationModel(**pert)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad scenario spec: {exc}") from None


def cmd_simulate(args) -> int:
    spec, model = _scenario_inputs(args)
    seed = args.seed if args.seed is not None else 0
    if seed < 0 or seed >= 2**64:
        raise CliError("--seed must be an unsigned 64-bit integer")
    header, frames = simulate_scene(spec, model, seed)
    write_scene(args.out, header, frames)
    log.info("wrote %d frames to %s", len(frames), args.out)
    return 0


def _tracker_config(doc: dict, bev: GridSpec) -> TrackerConfig:
    try:
        return TrackerConfig.from_dict(doc, spec=bev)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad tracker config: {exc}") from None


def cmd_track(args) -> int:
    header, frames = read_scene(args.scene)
    if any(f.pred is None for f in frames):
        missing = next(f.frame_index for f in frames if f.pred is None)
        raise CliError(f"{args.scene}: frame {missing} has no pred records")
    config = _tracker_config(_load_json(args.config), header.bev)
    tracker, outputs = track_scene(frames, config)
    cfg = config.to_dict()
    write_tracks(args.out, tracker.export_tracks(), {**cfg, "scene_seed": header.seed})
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".lifecycle.jsonl")
    write_jsonl(
        log_path,
        {"type": "lifecycle_header", "version": 1, "config": cfg},
        [o.to_dict() for o in outputs],
    )
    if args.dump_rasters:
        tracker.dump_rasters(args.dump_rasters)
    if args.snapshot:
        Path(args.snapshot).write_text(json.dumps(tracker.snapshot(), sort_keys=True, indent=2) + "\n")
    return 0


def _group_frame_traces(traces: List[dict]) -> List[dict]:
    grouped = {}
    for tr in traces:
        key = (tr["category"], tr["threshold"])
        grouped.setdefault(key, []).append(
            {"frame_index": tr["frame_index"], "predictions": tr["predictions"]}
        )
    return [
        {"category": cat, "threshold": thr, "frames": frames}
        for (cat, thr), frames in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1]))
    ]


def cmd_eval(args) -> int:
    header, frames = read_scene(args.scene)
    records = None
    if args.tracks:
        _, records = read_tracks(args.tracks)
    opts = _load_json(args.config)
    opts = {k: opts[k] for k in _EVAL_KEYS if k in opts}
    if args.mode == "frame":
        kwargs = {k: opts[k] for k in ("thresholds", "n_samples", "directional") if k in opts}
        report: EvalReport = evaluate_frames(frames, records, **kwargs)
        traces = _group_frame_traces(report.traces)
    else:
        if records is None:
            raise CliError("global mode needs a tracks file")
        try:
            report = evaluate_global(frames, records, header.bev, **opts)
        except GlobalEvalError as exc:
            raise CliError(str(exc)) from None
        traces = report.traces
    sys.stdout.write(report.to_table())
    if args.out:
        out = Path(args.out)
        out.write_text(report.to_json())
        out.with_suffix(".csv").write_text(report.to_csv())
    if args.dump_matches:
        Path(args.dump_matches).write_text("".join(dumps(t) + "\n" for t in traces))
    if args.plot:
        from .plotting import plot_ap_bars, plot_frame_series

        plot_dir = Path(args.plot)
        plot_dir.mkdir(parents=True, exist_ok=True)
        plot_ap_bars(report, plot_dir / f"ap_{report.mode}.png")
        if report.frames:
            plot_frame_series(report, plot_dir / "frame_map.png")
    return 0


def _frames_from_tracks(records) -> List[SceneFrame]:
    poses = {}
    for rec in records:
        for o in rec.observations:
            poses.setdefault(o.frame_index, o.ego_pose)
    return [SceneFrame(k, poses[k], []) for k in sorted(poses)]


def _parse_size(text: str):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 800x600, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def cmd_render(args) -> int:
    from .render import render

    first = Path(args.input).open(encoding="utf-8").readline()
    try:
        kind = json.loads(first).get("type") if first.strip() else None
    except json.JSONDecodeError:
        raise FormatError(args.input, 1, "invalid JSON") from None
    records = None
    config = None
    if kind == "tracks_header":
        cfg_doc, records = read_tracks(args.input)
        config = _tracker_config(cfg_doc, GridSpec.default())
        header = SceneHeader(config.spec)
        frames = _frames_from_tracks(records)
    else:
        header, frames = read_scene(args.input)
        if args.tracks:
            cfg_doc, records = read_tracks(args.tracks)
            config = _tracker_config(cfg_doc, header.bev)
    render(header, frames, args.out_dir, records, config, size=args.size, figures=not args.no_figures)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histmap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene file")
    p.add_argument("spec", nargs="?", help="scenario spec JSON (scenario + perturbation)")
    p.add_argument("--seed", type=int, default=None, help="u64 seed (default 0)")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--trajectory", choices=("straight", "turn", "loop"))
    p.add_argument("--jitter", type=float)
    p.add_argument("--score-noise", dest="score_noise", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--fp-rate", dest="fp_rate", type=float)
    p.add_argument("--id-switch", dest="id_switch", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the instance tracker over a scene")
    p.add_argument("scene")
    p.add_argument("--config", help="tracker config JSON")
    p.add_argument("--out", required=True, help="tracks JSONL")
    p.add_argument("--log", help="lifecycle log (default: <out>.lifecycle.jsonl)")
    p.add_argument("--dump-rasters", dest="dump_rasters", help="directory for final PGM history maps")
    p.add_argument("--snapshot", help="write tracker state JSON here")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracks against scene GT")
    p.add_argument("scene")
    p.add_argument("tracks", nargs="?")
    p.add_argument("--mode", choices=("frame", "global"), default="frame")
    p.add_argument("--config", help="evaluation options JSON")
    p.add_argument("--out", help="report JSON (a .csv table is written alongside)")
    p.add_argument("--dump-matches", dest="dump_matches", help="per-instance match traces (JSONL)")
    p.add_argument("--plot", help="directory for report figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw the global map and history snapshots")
    p.add_argument("input", help="scene or tracks JSONL")
    p.add_argument("--tracks")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--out", dest="out_dir", help=argparse.SUPPRESS)
    p.add_argument("--size", type=_parse_size, default=(800, 800))
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, FormatError, ScenarioError, TrackerError, GeometryError, RasterError,
            GlobalEvalError, OSError) as exc:
        print(f"histmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
