import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from histmap.cli import main
from histmap.io import read_scene
from histmap.plotting import id_color


@pytest.fixture(scope="module")
def perfect(tmp_path_factory):
    d = tmp_path_factory.mktemp("perfect")
    scene, tracks = d / "scene.jsonl", d / "tracks.jsonl"
    assert main(["simulate", "--seed", "3", "--out", str(scene)]) == 0
    assert main(["track", str(scene), "--out", str(tracks)]) == 0
    return d, scene, tracks


def _lines(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


def test_simulate_writes_header_plus_frames(perfect):
    _, scene, _ = perfect
    assert len(Path(scene).read_text().splitlines()) == 51


def test_simulate_is_repeatable(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert main(["simulate", "--seed", "9", "--jitter", "0.2", "--fp-rate", "1", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_full_dropout_gives_empty_preds(tmp_path):
    out = tmp_path / "s.jsonl"
    assert main(["simulate", "--seed", "1", "--dropout", "1.0", "--frames", "10", "--out", str(out)]) == 0
    _, frames = read_scene(out)
    assert all(f.pred == [] for f in frames)


def test_bad_spec_exits_nonzero(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text('{"scenario": {"trajectory": "zigzag"}}')
    assert main(["simulate", str(spec), "--out", str(tmp_path / "x.jsonl")]) == 1
    assert "zigzag" in capsys.readouterr().err
    assert main(["simulate", "--seed", "-1", "--out", str(tmp_path / "x.jsonl")]) == 1


def test_track_log_header_echoes_defaults(perfect):
    d, _, tracks = perfect
    header, *rows = _lines(Path(tracks).with_suffix(".lifecycle.jsonl"))
    assert header["config"]["tau_det"] == 0.4
    assert header["config"]["tau_track"] == 0.5
    assert header["config"]["lambda"] == 0.95
    assert len(rows) == 50


def test_perfect_tracks_only_lose_elements_that_leave_view(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text('{"n_pedestrians": 0}')
    scene, tracks = tmp_path / "s.jsonl", tmp_path / "t.jsonl"
    assert main(["simulate", str(spec), "--seed", "2", "--out", str(scene)]) == 0
    assert main(["track", str(scene), "--out", str(tracks)]) == 0
    rows = _lines(tmp_path / "t.lifecycle.jsonl")[1:]
    assert all(r["removed"] == [] for r in rows)
    assert rows[0]["live_count"] == rows[-1]["live_count"] == 4


def test_tau_track_above_one_kills_every_track(tmp_path, perfect):
    _, scene, _ = perfect
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"tau_track": 1.01}')
    out = tmp_path / "t.jsonl"
    assert main(["track", str(scene), "--config", str(cfg), "--out", str(out)]) == 0
    rows = _lines(tmp_path / "t.lifecycle.jsonl")[1:]
    for prev, cur in zip(rows, rows[1:]):
        assert sorted(cur["removed"]) == sorted(prev["born"])
        assert cur["continued"] == []


def test_track_reports_malformed_line(tmp_path, perfect, capsys):
    _, scene, _ = perfect
    lines = Path(scene).read_text().splitlines()
    lines[4] = '{"type": "frame", "frame_index": "four"}'
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["track", str(bad), "--out", str(tmp_path / "t.jsonl")]) == 1
    assert "bad.jsonl:5:" in capsys.readouterr().err


def test_track_needs_predictions(tmp_path, capsys):
    scene = tmp_path / "s.jsonl"
    scene.write_text(
        '{"type":"header","version":1,"bev":{"height":4,"width":4,"x_range":[0,4],"y_range":[0,4]}}\n'
        '{"type":"frame","frame_index":0,"ego_pose":{"x":0,"y":0,"theta":0},"gt":[]}\n'
    )
    assert main(["track", str(scene), "--out", str(tmp_path / "t.jsonl")]) == 1
    assert "pred" in capsys.readouterr().err


def test_track_optional_outputs(tmp_path, perfect):
    _, scene, _ = perfect
    snap, rasters = tmp_path / "snap.json", tmp_path / "r"
    assert main(["track", str(scene), "--out", str(tmp_path / "t.jsonl"), "--snapshot", str(snap),
                 "--dump-rasters", str(rasters)]) == 0
    doc = json.loads(snap.read_text())
    assert doc["frame_index"] == 49
    assert len(list(rasters.glob("*.pgm"))) == len(doc["live"])


def test_eval_frame_mode_perfect(tmp_path, perfect, capsys):
    _, scene, tracks = perfect
    out = tmp_path / "rep.json"
    assert main(["eval", str(scene), str(tracks), "--mode", "frame", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["mAP"] == 100.0
    assert "mAP" in capsys.readouterr().out
    assert out.with_suffix(".csv").exists()


def test_eval_global_mode_perfect(tmp_path, perfect):
    _, scene, tracks = perfect
    out, matches, plots = tmp_path / "g.json", tmp_path / "m.jsonl", tmp_path / "plots"
    assert main(["eval", str(scene), str(tracks), "--mode", "global", "--out", str(out),
                 "--dump-matches", str(matches), "--plot", str(plots)]) == 0
    doc = json.loads(out.read_text())
    assert doc["G-mAP"] >= 99.0
    traces = _lines(matches)
    expected = sum(1 for table in doc["ap"].values() for v in table.values() if v is not None)
    assert len(traces) == expected
    assert len({(t["category"], t["threshold"]) for t in traces}) == len(traces)
    assert (plots / "ap_global.png").exists()


def test_eval_frame_dump_matches_grouped(tmp_path, perfect):
    _, scene, tracks = perfect
    matches = tmp_path / "m.jsonl"
    assert main(["eval", str(scene), str(tracks), "--dump-matches", str(matches)]) == 0
    traces = _lines(matches)
    assert len(traces) == 9
    assert all(len(t["frames"]) > 0 for t in traces)


def test_eval_global_needs_gt_ids(tmp_path, perfect, capsys):
    _, scene, tracks = perfect
    lines = Path(scene).read_text().splitlines()
    frame = json.loads(lines[1])
    del frame["gt"][0]["id"]
    lines[1] = json.dumps(frame)
    bad = tmp_path / "noid.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["eval", str(bad), str(tracks), "--mode", "global"]) == 1
    assert "id" in capsys.readouterr().err


def test_render_scene_and_tracks(tmp_path, perfect):
    _, scene, tracks = perfect
    out = tmp_path / "render"
    assert main(["render", str(scene), "--tracks", str(tracks), "--out-dir", str(out)]) == 0
    for name in ("layer_pedestrian.pgm", "layer_divider.pgm", "layer_boundary.pgm", "map.svg", "global_map.png"):
        assert (out / name).exists()
    assert list((out / "history").glob("track_*.pgm"))
    svg = (out / "map.svg").read_text()
    assert svg.count('class="gt ') == 6


def test_render_tracks_only(tmp_path, perfect):
    _, _, tracks = perfect
    out = tmp_path / "r"
    assert main(["render", str(tracks), "--out-dir", str(out), "--no-figures"]) == 0
    assert (out / "map.svg").exists()


def test_render_empty_scene(tmp_path):
    scene = tmp_path / "empty.jsonl"
    scene.write_text('{"type":"header","version":1,"bev":{"height":4,"width":4,"x_range":[0,4],"y_range":[0,4]}}\n')
    out = tmp_path / "r"
    assert main(["render", str(scene), "--out-dir", str(out), "--size", "320x200"]) == 0
    svg = (out / "map.svg").read_text()
    assert 'width="320" height="200"' in svg
    assert "<polyline" not in svg and "<polygon" not in svg


def test_render_one_divider_one_path(tmp_path):
    scene = tmp_path / "one.jsonl"
    scene.write_text(
        '{"type":"header","version":1,"bev":{"height":100,"width":200,"x_range":[-30,30],"y_range":[-15,15]}}\n'
        '{"type":"frame","frame_index":0,"ego_pose":{"x":0,"y":0,"theta":0},'
        '"gt":[{"category":"divider","id":4,"points":[[-20,1.05],[20,1.05]]}]}\n'
    )
    out = tmp_path / "r"
    assert main(["render", str(scene), "--out-dir", str(out), "--no-figures"]) == 0
    assert (out / "map.svg").read_text().count("<polyline") == 1


def test_id_colors_are_stable():
    assert id_color(17) == id_color(17)
    assert id_color(17) != id_color(18)
    assert id_color(5).startswith("#") and len(id_color(5)) == 7


def test_entry_point_runs_as_module(tmp_path):
    env = {**os.environ, "HISTMAP_THREADS": "2"}
    res = subprocess.run([sys.executable, "-m", "histmap", "--version"], capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "histmap" in res.stdout
    res = subprocess.run([sys.executable, "-m", "histmap", "eval"], capture_output=True, text=True)
    assert res.returncode != 0
