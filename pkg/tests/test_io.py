from pathlib import Path

import pytest

from histmap.cli import main
from histmap.geometry import Category, Pose2, make_element
from histmap.io import FormatError, SceneFrame, SceneHeader, read_scene, read_tracks, write_scene
from histmap.raster import GridSpec

DATA = Path(__file__).parent / "data"


def test_golden_fixture_regenerates_byte_identically(tmp_path):
    scene, tracks, log = tmp_path / "s.jsonl", tmp_path / "t.jsonl", tmp_path / "l.jsonl"
    assert main(["simulate", str(DATA / "golden_spec.json"), "--seed", "7", "--out", str(scene)]) == 0
    assert main(["track", str(scene), "--out", str(tracks), "--log", str(log)]) == 0
    assert scene.read_bytes() == (DATA / "golden_scene.jsonl").read_bytes()
    assert tracks.read_bytes() == (DATA / "golden_tracks.jsonl").read_bytes()
    assert log.read_bytes() == (DATA / "golden_lifecycle.jsonl").read_bytes()


def test_scene_round_trip(tmp_path):
    header, frames = read_scene(DATA / "golden_scene.jsonl")
    out = tmp_path / "again.jsonl"
    write_scene(out, header, frames)
    assert out.read_bytes() == (DATA / "golden_scene.jsonl").read_bytes()
    assert header.seed == 7 and [f.frame_index for f in frames] == [0, 1, 2, 3]


def test_tracks_read():
    config, records = read_tracks(DATA / "golden_tracks.jsonl")
    assert config["tau_det"] == 0.4 and config["lambda"] == 0.95
    assert [r.track_id for r in records] == sorted(r.track_id for r in records)
    assert all(r.observations for r in records)


def _write(tmp_path, lines):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


HEADER = '{"type":"header","version":1,"bev":{"height":4,"width":4,"x_range":[0,4],"y_range":[0,4]}}'
FRAME = '{{"type":"frame","frame_index":{k},"ego_pose":{{"x":0,"y":0,"theta":0}},"gt":[]}}'


@pytest.mark.parametrize(
    "lines, line_no, fragment",
    [
        ([FRAME.format(k=0)], 1, "header"),
        ([HEADER.replace('"version":1', '"version":2')], 1, "version"),
        ([HEADER, FRAME.format(k=0), "{not json"], 3, "invalid JSON"),
        ([HEADER, FRAME.format(k=1), FRAME.format(k=1)], 3, "not increasing"),
        ([HEADER, '{"type":"frame","frame_index":0,"ego_pose":{"x":0,"y":0,"theta":0},'
                  '"gt":[{"category":"lane","points":[[0,0],[1,1]]}]}'], 2, "category"),
        ([HEADER, '{"type":"frame","frame_index":0,"ego_pose":{"x":0,"y":0},"gt":[]}'], 2, "theta"),
        ([HEADER, '[1, 2]'], 2, "not a JSON object"),
    ],
)
def test_scene_errors_carry_line_numbers(tmp_path, lines, line_no, fragment):
    path = _write(tmp_path, lines)
    with pytest.raises(FormatError) as err:
        read_scene(path)
    assert err.value.line == line_no
    assert fragment in str(err.value)


def test_empty_scene_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(FormatError):
        read_scene(path)


def test_pred_is_optional(tmp_path):
    spec = GridSpec(4, 4, (0, 4), (0, 4))
    el = make_element([[0.5, 0.5], [3.5, 0.5]], Category.DIVIDER, 1.0, 3)
    path = tmp_path / "s.jsonl"
    write_scene(path, SceneHeader(spec), [SceneFrame(0, Pose2(), [el])])
    _, frames = read_scene(path)
    assert frames[0].pred is None and frames[0].gt[0].track_id == 3
