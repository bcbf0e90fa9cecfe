import math

import pytest
from hypothesis import given, strategies as st

from intentmerge.world import (
    GeometryError,
    LaneRef,
    RoadGeometry,
    bumper_gap,
    check_collision,
    lane_center,
    locate_lane,
    make_vehicle,
)

import oracles

G = RoadGeometry()
L0, L1, RAMP = LaneRef.highway(0), LaneRef.highway(1), LaneRef.ramp()


def test_default_merge_zone():
    assert G.merge_zone == (230.0, 310.0)
    assert G.road_end == 460.0
    assert G.rightmost == L1


def test_geometry_validation():
    with pytest.raises(GeometryError):
        RoadGeometry(highway_lane_count=1)
    with pytest.raises(GeometryError):
        RoadGeometry(lane_width=0)
    with pytest.raises(GeometryError):
        RoadGeometry(segment_lengths=(150, 80, 80))


def test_lane_center_examples():
    assert lane_center(G, L0) == 0.0
    assert lane_center(G, L1) == 4.0
    assert lane_center(G, RAMP) == 8.0


def test_lane_center_unknown_lane():
    with pytest.raises(GeometryError):
        lane_center(G, LaneRef.highway(5))


def test_locate_lane_examples():
    assert locate_lane(G, 100, 8.0) == RAMP
    assert locate_lane(G, 250, 4.1) == L1
    assert locate_lane(G, 320, 8.0) == L1


def test_locate_lane_tie_goes_to_highway():
    assert locate_lane(G, 250, 6.0) == L1


def test_locate_lane_beyond_road():
    with pytest.raises(GeometryError):
        locate_lane(G, 460.5, 0.0)


@given(st.floats(0, 460))
def test_locate_lane_inverts_lane_center(x):
    for lane in G.lanes_at(x):
        assert locate_lane(G, x, lane_center(G, lane)) == lane


def test_lane_ref_text_roundtrip():
    for lane in (L0, L1, RAMP):
        assert LaneRef.parse(str(lane)) == lane
    with pytest.raises(GeometryError):
        LaneRef.parse("shoulder")


def test_collision_examples():
    a = make_vehicle("a", G, L1, 100, 25)
    assert check_collision(a, make_vehicle("b", G, L1, 100, 25))
    assert not check_collision(a, make_vehicle("b", G, L1, 110, 25))
    assert not check_collision(a, make_vehicle("b", G, L0, 100, 25))


def test_collision_requires_distinct_ids():
    a = make_vehicle("a", G, L1, 100, 25)
    with pytest.raises(ValueError):
        check_collision(a, a)


def test_touching_boxes_do_not_collide():
    a = make_vehicle("a", G, L1, 100, 25)
    assert not check_collision(a, make_vehicle("b", G, L1, 105, 25))
    assert check_collision(a, make_vehicle("b", G, L1, 104.99, 25))


pose = st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi))


@given(pose, pose)
def test_collision_matches_polygon_oracle(p, q):
    from dataclasses import replace
    a = replace(make_vehicle("a", G, L0, 0, 20), x=p[0], y=p[1], heading=p[2])
    b = replace(make_vehicle("b", G, L0, 0, 20), x=q[0], y=q[1], heading=q[2])
    expect = oracles.rects_intersect(oracles.rect_corners(*p, 5, 2), oracles.rect_corners(*q, 5, 2))
    got = check_collision(a, b)
    assert got == check_collision(b, a)
    if got != expect:
        # only exact-touching configurations may disagree with the tolerant oracle
        sep = oracles.rects_intersect(oracles.rect_corners(*p, 5 + 1e-6, 2 + 1e-6),
                                      oracles.rect_corners(*q, 5 + 1e-6, 2 + 1e-6))
        assert sep != oracles.rects_intersect(oracles.rect_corners(*p, 5 - 1e-6, 2 - 1e-6),
                                              oracles.rect_corners(*q, 5 - 1e-6, 2 - 1e-6))


def test_bumper_gap():
    rear = make_vehicle("r", G, L1, 100, 25)
    front = make_vehicle("f", G, L1, 130, 25)
    assert bumper_gap(rear, front) == 25.0


def test_make_vehicle_rejects_missing_lane():
    with pytest.raises(GeometryError):
        make_vehicle("a", G, RAMP, 320, 20)
