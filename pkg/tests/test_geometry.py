import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echoexplain import geometry as geo
from echoexplain.config import InvalidThresholds, Thresholds
from echoexplain.contour_io import CardiacCycle, ContourFrame, parse_cycle
from echoexplain.errors import (
    Collinear, DegenerateAxis, InvalidSector, NonPositiveEDV, PointCountMismatch,
)
from echoexplain.synthetic import (
    bullet_frame, circle_frame, ellipse_frame, scaled_about, star_frame,
)
from oracles import monte_carlo_inside_fraction, raster_volume, spheroid_volume

DATA = Path(__file__).parent / "data"


def axis_frame():
    # apex (56,10), basal landmarks (46,100) and (66,100)
    pts = [(46, 100), (40, 60), (56, 10), (72, 60), (66, 100)]
    return ContourFrame.from_points(pts, (56, 10), (46, 100), (66, 100))


def test_long_axis_construction():
    ax = geo.long_axis(axis_frame())
    assert ax.length == pytest.approx(90.0)
    assert ax.direction == pytest.approx((0.0, 1.0))
    assert math.hypot(*ax.direction) == pytest.approx(1.0, abs=1e-9)


def test_long_axis_rotation():
    f = axis_frame()
    assert geo.long_axis(f.transformed(30)).length == pytest.approx(geo.long_axis(f).length, abs=1e-9)


def test_long_axis_degenerate():
    pts = [(0, 0), (10, 0), (10, 10), (0, 10)]
    f = ContourFrame(tuple(pts), (5.0, 0.0), (5.0, 0.5), (5.0, -0.5))
    with pytest.raises(DegenerateAxis):
        geo.long_axis(f)


def test_spheroid_volume():
    v = geo.disk_volume(ellipse_frame(45, 20))
    assert v == pytest.approx(spheroid_volume(45, 20), rel=0.02)


def test_volume_scaling():
    f = ellipse_frame(45, 20)
    assert geo.disk_volume(f.scaled(2)) == pytest.approx(8 * geo.disk_volume(f), rel=1e-9)


def test_volume_spacing():
    f = ellipse_frame(45, 20)
    g = ellipse_frame(45, 20, spacing=0.1)
    assert geo.disk_volume(g) == pytest.approx(1e-3 * geo.disk_volume(f), rel=1e-12)


def test_disk_refinement():
    f = ellipse_frame(45, 20, n=801)
    assert geo.disk_volume(f, 20) == pytest.approx(geo.disk_volume(f, 200), rel=0.01)


def test_disk_count_validation():
    with pytest.raises(ValueError):
        geo.disk_volume(ellipse_frame(), 3)


@settings(max_examples=25, deadline=None)
@given(st.floats(-180, 180), st.floats(-50, 50), st.floats(-50, 50))
def test_volume_rigid_invariance(angle, dx, dy):
    f = ellipse_frame(45, 20)
    g = f.transformed(angle, (dx, dy))
    assert geo.disk_volume(g) == pytest.approx(geo.disk_volume(f), rel=1e-6)


def test_raster_oracle_on_stars(rng):
    for _ in range(5):
        f = star_frame(rng)
        assert geo.disk_volume(f) == pytest.approx(raster_volume(f, step=0.2), rel=0.03)


@pytest.mark.parametrize("edv, esv, ef", [(50, 50, 0.0), (100, 31, 69.0), (80, 0, 100.0)])
def test_ejection_fraction(edv, esv, ef):
    assert geo.ejection_fraction(geo.VolumePair(edv, esv)) == pytest.approx(ef)


def test_ef_nonpositive_edv():
    with pytest.raises(NonPositiveEDV):
        geo.VolumePair(0, 0)


def test_spheroid_ef():
    ed, es = ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1)
    ef = geo.ejection_fraction(geo.VolumePair(geo.disk_volume(ed), geo.disk_volume(es)))
    analytic = 100 * (1 - spheroid_volume(45, 14) / spheroid_volume(45, 20))
    assert ef == pytest.approx(analytic, rel=0.01)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0))
def test_ef_scale_invariance(s):
    ed, es = ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1)
    ef = geo.ejection_fraction(geo.VolumePair(geo.disk_volume(ed), geo.disk_volume(es)))
    ef_s = geo.ejection_fraction(geo.VolumePair(geo.disk_volume(ed.scaled(s)), geo.disk_volume(es.scaled(s))))
    assert ef_s == pytest.approx(ef, rel=1e-9)


# -- hull --------------------------------------------------------------------

def test_hull_square_with_center():
    hull = geo.convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
    assert len(hull) == 4
    assert {tuple(p) for p in hull} == {(0, 0), (1, 0), (1, 1), (0, 1)}


def test_hull_fixpoint_ccw():
    pts = np.array([(0, 0), (4, 0), (5, 3), (2, 5), (-1, 3)], float)
    hull = geo.convex_hull(pts)
    assert {tuple(p) for p in hull} == {tuple(p) for p in pts}
    x, y = hull[:, 0], hull[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0


def test_hull_collinear():
    with pytest.raises(Collinear):
        geo.convex_hull([(0, 0), (1, 1), (2, 2)])


def test_hull_random_containment(rng):
    from matplotlib.path import Path as MplPath
    pts = rng.normal(size=(100, 2))
    hull = geo.convex_hull(pts)
    path = MplPath(hull)
    assert path.contains_points(pts, radius=1e-9).all() or all(
        path.contains_point(p, radius=1e-9) or path.contains_point(p, radius=-1e-9) for p in pts
    )
    # brute force: every point lies on the inner side of every hull edge
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        assert (cross >= -1e-12).all()


# -- bulge -------------------------------------------------------------------

def test_bulge_convex_contour():
    r = geo.bulge_score(ellipse_frame())
    assert r.max_defect_depth == 0.0
    assert r.score == 1000.0
    assert r.category == "none"
    assert r.defect_location is None


@settings(max_examples=20, deadline=None)
@given(st.floats(20, 60), st.floats(8, 30), st.floats(-90, 90))
def test_bulge_convex_property(a, b, angle):
    f = ellipse_frame(a, b, n=101).transformed(angle, (200, 200))
    assert geo.bulge_score(f).max_defect_depth == 0.0


@pytest.mark.parametrize("score, cls", [
    (500, "none"), (417, "none"), (400, "none"), (399.9, "mild"), (300, "mild"),
    (299, "prominent"), (150, "prominent"), (149, "undetected_convexity"), (0, "undetected_convexity"),
])
def test_bulge_classes(score, cls):
    assert geo.classify_bulge(score) == cls


def test_bulge_class_monotone():
    order = {c: i for i, c in enumerate(("undetected_convexity", "prominent", "mild", "none"))}
    ranks = [order[geo.classify_bulge(s)] for s in np.linspace(0, 1000, 2001)]
    assert ranks == sorted(ranks)


@pytest.mark.parametrize("bad", [(300, 150, 400), (150, 150, 400), (1, 2)])
def test_bulge_thresholds_rejected(bad):
    with pytest.raises(InvalidThresholds):
        geo.classify_bulge(500, bad)


def dented(depth):
    """Ellipse whose septal wall is pushed inward by ``depth`` px at mid height."""
    f = ellipse_frame(45, 20, n=201)
    xy = f.xy.copy()
    cx, cy = 56.0, 60.0
    for i in range(f.apex_index + 1):
        x, y = xy[i]
        w = math.exp(-((y - cy) / 8.0) ** 2)
        xy[i, 0] = x + depth * w * math.copysign(1, cx - x)
    return ContourFrame.from_points(xy, f.apex, f.basal_left, f.basal_right)


def test_bulge_dent_depth():
    f = dented(6.0)
    r = geo.bulge_score(f)
    assert f.points[r.defect_location[0]][1] < 80
    # the hull bridges the dent; depth is close to the push distance
    assert 4.0 < r.max_defect_depth <= 6.0
    assert r.score == pytest.approx(1000 * (1 - r.max_defect_depth / geo.long_axis(f).length))
    assert geo.bulge_score(dented(12.0)).score < r.score


def test_bulge_lateral_dent_ignored():
    f = dented(6.0)
    mirrored = ContourFrame.from_points(
        [(112 - x, y) for x, y in f.points], f.apex, (112 - f.basal_left[0], f.basal_left[1]),
        (112 - f.basal_right[0], f.basal_right[1]),
    )
    # mirroring moves the dent to the other wall, which is not the septum
    assert geo.bulge_score(mirrored).max_defect_depth == 0.0


# -- segments ----------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(7, 400), st.data())
def test_partition(n, data):
    apex = data.draw(st.integers(0, n - 1))
    if n < 13:
        return
    ranges = geo.segment_partition(n, apex)
    assert len(ranges) == 7
    covered = [i for lo, hi in ranges for i in range(lo, hi)]
    assert covered == list(range(n))  # complete and disjoint
    assert all(hi > lo for lo, hi in ranges)


def test_partition_apex_centered():
    lo, hi = geo.segment_partition(41, 20)[3]
    assert lo <= 20 < hi
    assert abs((lo + hi - 1) / 2 - 20) <= 0.5


def test_motion_no_motion():
    f = ellipse_frame()
    m = geo.segment_motion(f, f)
    assert m.labels == ("normal",) * 7
    assert m.basal_vertical == 0.0


def test_motion_uniform_shrink():
    ed = ellipse_frame()
    es = scaled_about(ed, 0.9, frame_index=1)
    m = geo.segment_motion(ed, es)
    assert m.labels == ("normal",) * 7
    for s in m.per_segment:
        assert np.linalg.norm(s.relative_displacement) < 1e-9 * 90


def _push_segment(ed, es, k, px):
    ranges = geo.segment_partition(len(ed.points), ed.apex_index)
    lo, hi = ranges[k]
    c = ed.xy.mean(axis=0)
    xy = es.xy.copy()
    seg_center = ed.xy[lo:hi].mean(axis=0)
    u = (seg_center - c) / np.linalg.norm(seg_center - c)
    xy[lo:hi] += px * u
    moved = ContourFrame(tuple(map(tuple, xy)), es.apex, es.basal_left, es.basal_right, es.frame_index)
    return moved, (lo, hi), u


@pytest.mark.parametrize("k", [1, 5])
def test_motion_one_dyskinetic_segment(k):
    ed = ellipse_frame()
    es = scaled_about(ed, 0.9, frame_index=1)
    moved, (lo, hi), u = _push_segment(ed, es, k, 5.0)
    m = geo.segment_motion(ed, moved)
    expected = ["normal"] * 7
    expected[k] = "dyskinetic"
    assert list(m.labels) == expected
    # hand recomputation of the segment's mean displacement
    shrink = (es.xy[lo:hi] - ed.xy[lo:hi]).mean(axis=0)
    assert np.allclose(m.per_segment[k].mean_displacement, shrink + 5.0 * u)


def test_motion_hypokinetic():
    ed = ellipse_frame()
    es = scaled_about(ed, 0.9, frame_index=1)
    moved, _, _ = _push_segment(ed, es, 5, 0.5)  # 0.5 px < 1% of a 90 px axis
    assert geo.segment_motion(ed, moved).labels[5] == "hypokinetic"


def test_motion_point_mismatch():
    with pytest.raises(PointCountMismatch):
        geo.segment_motion(ellipse_frame(n=101), ellipse_frame(n=121, frame_index=1))


def test_basal_vertical_modes():
    ed = ellipse_frame()
    up = ed.transformed(0, (0, -3))  # whole contour 3 px toward the apex (image up)
    assert geo.segment_motion(ed, up).basal_vertical == pytest.approx(3.0)
    assert geo.segment_motion(ed, up, vertical_mode="image_y").basal_vertical == pytest.approx(3.0)
    tilted = ed.transformed(90)
    moved = tilted.transformed(0, (3, 0))
    # axis projection follows the tilted axis; image y sees nothing
    assert geo.segment_motion(tilted, moved).basal_vertical == pytest.approx(3.0)
    assert geo.segment_motion(tilted, moved, vertical_mode="image_y").basal_vertical == 0.0


# -- apex, shape, sector -----------------------------------------------------

def test_apex_still():
    f = ellipse_frame()
    r = geo.apex_motion(f, f)
    assert r.percent_of_length == 0.0 and not r.suspicious


def test_apex_perpendicular():
    ed = axis_frame()
    es = ed.transformed(0, (5, 0))
    assert geo.apex_motion(ed, es).displacement_along_axis == pytest.approx(0.0, abs=1e-12)


def test_apex_percent_1361():
    ed = axis_frame()
    es = ed.transformed(0, (0, 0.1361 * 90))
    r = geo.apex_motion(ed, es)
    assert r.percent_of_length == pytest.approx(13.61)
    assert r.suspicious


def test_apex_scale_invariant():
    ed = axis_frame()
    es = ed.transformed(0, (1, 7))
    assert geo.apex_motion(ed.scaled(3), es.scaled(3)).percent_of_length == pytest.approx(
        geo.apex_motion(ed, es).percent_of_length, rel=1e-12)


def test_shape_circle():
    assert geo.length_width_ratio(circle_frame()).ratio == pytest.approx(1.0, abs=0.02)


def test_shape_bullet():
    r = geo.length_width_ratio(bullet_frame(90, 45))
    assert r.length == pytest.approx(90.0)
    assert r.mid_width == pytest.approx(45.0)
    assert r.ratio == pytest.approx(2.0, abs=0.05)


def test_shape_scale():
    f = ellipse_frame()
    assert geo.length_width_ratio(f.scaled(3)).ratio == pytest.approx(geo.length_width_ratio(f).ratio, rel=1e-9)


UNIT = ContourFrame.from_points([(0, 0), (1, 0), (1, 1), (0, 1)], (0.5, 0.0), (0, 1), (1, 1))


def test_sector_cases():
    big = [(-10, -10), (10, -10), (10, 10), (-10, 10)]
    assert geo.sector_intersection(UNIT, big).ratio == 1.0
    far = [(20, 20), (30, 20), (30, 30)]
    assert geo.sector_intersection(UNIT, far).ratio == 0.0
    half = [(-5, -5), (0.5, -5), (0.5, 5), (-5, 5)]
    r = geo.sector_intersection(UNIT, half)
    assert r.ratio == pytest.approx(0.5, abs=1e-9)
    mc = monte_carlo_inside_fraction(UNIT.xy, lambda x, y: x < 0.5)
    assert mc == pytest.approx(0.5, abs=0.01)


def test_sector_invalid():
    with pytest.raises(InvalidSector):
        geo.sector_intersection(UNIT, [(0, 0), (1, 1), (1, 0), (0, 1)])


@settings(max_examples=20, deadline=None)
@given(st.floats(-180, 180), st.floats(-20, 20), st.floats(-20, 20))
def test_sector_rigid_invariance(angle, dx, dy):
    f = ellipse_frame()
    sector = np.array([(56, 0), (0, 90), (112, 90)], float)
    th = math.radians(angle)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    moved_sector = sector @ rot.T + (dx, dy)
    a = geo.sector_intersection(f, sector).ratio
    b = geo.sector_intersection(f.transformed(angle, (dx, dy)), moved_sector).ratio
    assert b == pytest.approx(a, abs=1e-9)


# -- attribute vector ---------------------------------------------------------

def test_vector_concentric_ellipses():
    cyc = CardiacCycle("c", ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1))
    v = geo.compute_attribute_vector(cyc)
    assert v.ef > 0
    assert v.bulge_class == "none"
    assert v.apex_percent == 0.0
    assert v.contrast is None and v.sector_ratio is None
    assert v.warnings == ()


def test_vector_orders_ed_es():
    cyc = CardiacCycle("c", ellipse_frame(45, 14), ellipse_frame(45, 20, frame_index=1))
    v = geo.compute_attribute_vector(cyc)
    assert v.ef > 0 and v.edv > v.esv
    assert "es_larger_than_ed" in v.warnings


def test_vector_mismatched_counts():
    cyc = CardiacCycle("c", ellipse_frame(45, 20, n=101), ellipse_frame(45, 14, n=121, frame_index=1))
    v = geo.compute_attribute_vector(cyc)
    assert v.segment_labels == () and "point_count_mismatch" in v.warnings


def test_vector_dict_roundtrip():
    cyc = CardiacCycle("c", ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1))
    v = geo.compute_attribute_vector(cyc, sector=[(56, 0), (0, 120), (112, 120)])
    doc = json.loads(json.dumps(v.to_dict()))
    assert doc["contrast"] is None
    assert geo.AttributeVector.from_dict(doc) == v


def test_vector_golden():
    cyc = parse_cycle((DATA / "golden_tracings.csv").read_text(), format="echonet")
    v = geo.compute_attribute_vector(cyc)
    golden = json.loads((DATA / "golden_vector.json").read_text())
    got = v.to_dict()
    assert set(got) == set(golden)
    for k, want in golden.items():
        if isinstance(want, float):
            assert got[k] == pytest.approx(want, rel=1e-9, abs=1e-9), k
        else:
            assert got[k] == want, k
