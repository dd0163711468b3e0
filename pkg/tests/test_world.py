import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causetrace.scenario import scenario_from_dict
from causetrace.world import (EgoState, WHEELBASE, ground_truth_objects, step_ego)
from conftest import static_object, straight_road_doc


def test_straight_advance():
    s = EgoState((0.0, 0.0), 0.0, 10.0, 0.0, 0)
    s2 = step_ego(s, 0.0, 0.0, 100)
    assert s2.p == pytest.approx((1.0, 0.0))
    assert s2.speed == 10.0
    assert s2.t == 100


def test_speed_clamps_at_zero():
    s = EgoState((0.0, 0.0), 0.0, 1.0, 0.0, 0)
    s2 = step_ego(s, -8.0, 0.0, 1000)
    assert s2.speed == 0.0


def test_command_clamps():
    s = EgoState((0.0, 0.0), 0.0, 5.0, 0.0, 0)
    hard = step_ego(s, 99.0, 0.0, 1000)
    legal = step_ego(s, 3.0, 0.0, 1000)
    assert hard.speed == legal.speed


def test_constant_steer_closes_circle():
    steer = 0.3
    radius = WHEELBASE / math.tan(steer)
    speed = 5.0
    circumference = 2 * math.pi * radius
    total_ms = int(circumference / speed * 1000)
    s = EgoState((0.0, 0.0), 0.0, speed, 0.0, 0)
    for _ in range(total_ms):
        s = step_ego(s, 0.0, steer, 1)
    # Closed-form check: after one full loop the heading wraps to the start.
    assert math.atan2(math.sin(s.heading), math.cos(s.heading)) == pytest.approx(0.0, abs=1e-2)
    assert math.hypot(*s.p) < 0.1


@settings(max_examples=100, deadline=None)
@given(speed=st.floats(0, 30), accel=st.floats(-8, 0), steps=st.integers(1, 50))
def test_nonpositive_accel_never_speeds_up(speed, accel, steps):
    s = EgoState((0.0, 0.0), 0.0, speed, 0.0, 0)
    for _ in range(steps):
        s2 = step_ego(s, accel, 0.0, 10)
        assert s2.speed <= s.speed + 1e-12
        s = s2


def scenario_with_objects():
    return scenario_from_dict(straight_road_doc(objects=[
        static_object("near", p=(30.0, 0.0)),
        static_object("far", p=(85.0, 0.0)),
    ]))


def test_ground_truth_unlimited_range():
    sc = scenario_with_objects()
    got = ground_truth_objects(sc, 0, (5.0, 0.0), sensor_range=float("inf"))
    assert {o.id for o in got} == {"near", "far"}


def test_ground_truth_range_excludes():
    sc = scenario_with_objects()
    got = ground_truth_objects(sc, 0, (5.0, 0.0), sensor_range=60.0)
    assert {o.id for o in got} == {"near"}


def test_ground_truth_matches_pose_interpolation():
    from causetrace.benchmark import load_builtin_scenario
    from causetrace.scenario import object_pose_at

    sc = load_builtin_scenario("cs2")
    t = 7000
    lead = sc.object_by_id("lead")
    got = ground_truth_objects(sc, t, (0.0, 0.0), sensor_range=float("inf"))
    box = next(o.box for o in got if o.id == "lead")
    p, v, _ = object_pose_at(lead, t)
    assert box.center == pytest.approx(p)
