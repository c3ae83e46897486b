import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from histmap.geometry import (
    Category,
    GeometryError,
    MapElement,
    Polygon,
    Polyline,
    Pose2,
    chamfer,
    compose,
    cumulative_length,
    interpolate_at,
    make_element,
    normalize_angle,
    resample,
    resample_points,
    transform,
)

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)
poses = st.builds(Pose2, coord, coord, angle)


def _line(pts):
    return make_element(pts, Category.DIVIDER, 0.8, 7)


# ---- transform -------------------------------------------------------------

def test_identity_pose_leaves_element_unchanged():
    el = _line([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
    assert np.array_equal(transform(el, Pose2()).points, el.points)


def test_pure_translation():
    out = transform(_line([[0.0, 0.0], [2.0, 0.0]]), Pose2(1.0, 0.0, 0.0))
    assert np.allclose(out.points[0], [1.0, 0.0])


def test_rotation_then_translation():
    # R(pi/2) (1, 0) = (0, 1); plus t = (1, 1) gives (1, 2)
    out = transform(_line([[1.0, 0.0], [2.0, 0.0]]), Pose2(1.0, 1.0, math.pi / 2))
    assert np.allclose(out.points[0], [1.0, 2.0], atol=1e-12)


def test_transform_keeps_metadata():
    el = _line([[0.0, 0.0], [1.0, 0.0]])
    out = transform(el, Pose2(3, 4, 1))
    assert (out.category, out.score, out.track_id) == (el.category, el.score, el.track_id)


@given(poses, poses, poses)
def test_compose_is_associative(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert left.x == pytest.approx(right.x, abs=1e-9)
    assert left.y == pytest.approx(right.y, abs=1e-9)
    assert abs(normalize_angle(left.theta - right.theta)) < 1e-9


@given(poses, poses)
def test_transform_composition_law(p1, p2):
    el = _line([[0.0, 0.0], [1.5, -2.0], [4.0, 1.0]])
    twice = transform(transform(el, p1), p2)
    once = transform(el, compose(p2, p1))
    assert np.allclose(twice.points, once.points, atol=1e-9)


@given(poses)
def test_pose_then_inverse_round_trips(p):
    el = _line([[0.0, 0.0], [1.5, -2.0], [4.0, 1.0]])
    back = transform(transform(el, p), p.inverse())
    assert np.allclose(back.points, el.points, atol=1e-9)


@given(poses)
def test_compose_with_inverse_is_identity(p):
    e = compose(p, p.inverse())
    assert abs(e.x) < 1e-9 and abs(e.y) < 1e-9 and abs(e.theta) < 1e-12


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_angle_range(theta):
    w = Pose2(0, 0, theta).theta
    assert -math.pi < w <= math.pi


def test_pose_matrix_matches_apply():
    p = Pose2(2.0, -1.0, 0.7)
    pt = np.array([0.3, 4.0])
    assert np.allclose((p.matrix() @ np.append(pt, 1.0))[:2], p.apply(pt)[0])


# ---- constructors ----------------------------------------------------------

def test_polyline_rejects_consecutive_duplicates():
    with pytest.raises(GeometryError):
        Polyline([[0, 0], [0, 0], [1, 0]])


def test_polyline_rejects_nan():
    with pytest.raises(GeometryError):
        Polyline([[0, 0], [np.nan, 1]])


def test_polygon_rejects_bowtie_and_zero_area():
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])
    with pytest.raises(GeometryError):
        Polygon([[0, 0], [1, 0], [2, 0]])


def test_polygon_drops_closing_vertex():
    sq = Polygon([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]])
    assert len(sq) == 4 and sq.area == 1.0
    assert np.array_equal(sq.boundary().points[0], sq.boundary().points[-1])


def test_category_geometry_pairing():
    with pytest.raises(GeometryError):
        MapElement(Polyline([[0, 0], [1, 0]]), Category.PEDESTRIAN)
    with pytest.raises(GeometryError):
        MapElement(Polygon([[0, 0], [1, 0], [0, 1]]), Category.BOUNDARY)
    with pytest.raises(GeometryError):
        make_element([[0, 0], [1, 0]], "divider", score=1.5)


# ---- resample --------------------------------------------------------------

def test_resample_midpoint():
    out = resample(Polyline([[0, 0], [1, 0]]), 3)
    assert np.allclose(out.points, [[0, 0], [0.5, 0], [1, 0]])


def test_resample_uniform_line_is_fixed_point():
    line = Polyline([[0, 0], [1, 0], [2, 0], [3, 0]])
    assert np.allclose(resample(line, 4).points, line.points, atol=1e-12)


def test_resample_l_shape():
    # total length 2, stations 0, 1, 2 land on the start, corner and end
    out = resample(Polyline([[0, 0], [1, 0], [1, 1]]), 3)
    assert np.allclose(out.points, [[0, 0], [1, 0], [1, 1]], atol=1e-12)


def test_resample_zero_length_and_bad_n():
    with pytest.raises(GeometryError):
        resample(Polyline([[0, 0], [1, 0]]), 1)


line_pts = st.lists(st.tuples(coord, coord), min_size=2, max_size=8).filter(
    lambda p: all(math.dist(a, b) > 1e-3 for a, b in zip(p, p[1:]))
)


@given(line_pts, st.integers(2, 60))
def test_resample_endpoints_and_stations(pts, n):
    line = Polyline(pts)
    out = resample_points(line.points, n)
    assert np.array_equal(out[0], line.points[0])
    assert np.array_equal(out[-1], line.points[-1])
    # every sample sits on the original polyline at equal arc-length spacing
    total = cumulative_length(line.points)[-1]
    for k, p in enumerate(out):
        s = total * k / (n - 1)
        assert np.allclose(p, interpolate_at(line.points, np.array([s]))[0], atol=1e-9 * max(1.0, total))


@given(st.floats(0.5, 100), st.floats(-3.2, 3.2), st.integers(2, 40), st.integers(2, 200))
def test_resample_preserves_length_of_straight_lines(length, heading, k, n):
    d = np.array([math.cos(heading), math.sin(heading)])
    pts = np.outer(np.linspace(0, length, k), d)
    out = resample(Polyline(pts), n).points
    assert cumulative_length(out)[-1] == pytest.approx(length, rel=1e-9)


# ---- chamfer ---------------------------------------------------------------

def test_chamfer_identical_is_zero():
    a = Polyline([[0, 0], [3, 1], [5, -2]])
    assert chamfer(a, a) == 0.0


@pytest.mark.parametrize("d", [0.1, 1.0, 2.5])
def test_chamfer_parallel_offset(d):
    a = Polyline([[0, 0], [10, 0]])
    b = Polyline([[0, d], [10, d]])
    assert chamfer(a, b) == pytest.approx(d, abs=1e-12)


def test_chamfer_directional_subset():
    long = Polyline([[0, 0], [10, 0]])
    short = Polyline([[0, 0], [5, 0]])
    # the short line lies on the long one, so only sample spacing (10/99) remains
    assert chamfer(short, long, directional=True) <= 0.5 * 10 / 99
    assert chamfer(long, short, directional=True) > 1.0


@given(line_pts, line_pts)
def test_chamfer_symmetric_nonnegative(a, b):
    la, lb = Polyline(a), Polyline(b)
    x, y = chamfer(la, lb, 20), chamfer(lb, la, 20)
    assert x >= 0.0
    assert x == pytest.approx(y, abs=1e-9)
