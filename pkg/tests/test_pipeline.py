import math
import random

import pytest

from causetrace.faults import FaultSpec, Trigger
from causetrace.geometry import OrientedBox, min_obb_distance
from causetrace.middleware import ComponentId
from causetrace.payloads import LocalizationOut, PerceivedObject, PerceptionOut
from causetrace.pipeline import (control_tick, localization_tick,
                                 make_planner_context, perception_tick,
                                 planning_tick, prediction_tick)
from causetrace.scenario import scenario_from_dict
from causetrace.world import EgoState, TruthObject
from conftest import static_object, straight_road_doc

RNG = random.Random(0)


def truth_list():
    return [
        TruthObject("car", "Vehicle", OrientedBox((40.0, 0.0), (2.2, 0.9), 0.0), (5.0, 0.0)),
        TruthObject("ped", "Pedestrian", OrientedBox((30.0, 5.0), (0.25, 0.25), 0.0),
                    (0.0, -1.5)),
    ]


def test_perception_identity_without_faults():
    out, changed = perception_tick(truth_list(), [], RNG, 1000, 0.0)
    assert not changed
    assert [o.id for o in out.objects] == ["car", "ped"]
    assert out.objects[0].box.center == (40.0, 0.0)


def test_miss_detection_window():
    fault = FaultSpec(ComponentId.PERCEPTION, "miss_detection",
                      Trigger(t0=2000, t1=6000, object_id="ped"))
    inside, changed = perception_tick(truth_list(), [fault], RNG, 3000, 0.0)
    assert changed and [o.id for o in inside.objects] == ["car"]
    outside, changed = perception_tick(truth_list(), [fault], RNG, 6000, 0.0)
    assert not changed and len(outside.objects) == 2


def test_wrong_velocity_shifts_along_heading():
    fault = FaultSpec(ComponentId.PERCEPTION, "wrong_velocity",
                      Trigger(object_id="car"), magnitude={"dv": -5.0})
    out, changed = perception_tick(truth_list(), [fault], RNG, 0, 0.0)
    assert changed
    car = next(o for o in out.objects if o.id == "car")
    assert car.v == pytest.approx((0.0, 0.0))


def test_wrong_longitudinal_shift_uses_ego_heading():
    fault = FaultSpec(ComponentId.PERCEPTION, "wrong_longitudinal_distance",
                      Trigger(object_id="car"), magnitude={"offset": 10.0})
    out, _ = perception_tick(truth_list(), [fault], RNG, 0, 0.0)
    car = next(o for o in out.objects if o.id == "car")
    assert car.box.center == pytest.approx((50.0, 0.0))


def test_prediction_constant_velocity():
    perc = PerceptionOut((PerceivedObject(
        "o", "Vehicle", OrientedBox((0.0, 0.0), (2.0, 1.0), 0.0), (2.0, 0.0)),))
    out, changed = prediction_tick([perc], [], 0)
    assert not changed
    tr = out.trajectories[0]
    t, x, y = tr.points[10]  # +1 s at 100 ms steps
    assert (t, x, y) == (1000, pytest.approx(2.0), pytest.approx(0.0))


def test_prediction_static_object_constant():
    perc = PerceptionOut((PerceivedObject(
        "o", "StaticObstacle", OrientedBox((7.0, 1.0), (0.2, 0.2), 0.0), (0.0, 0.0)),))
    out, _ = prediction_tick([perc], [], 0)
    assert all((x, y) == (7.0, 1.0) for _, x, y in out.trajectories[0].points)


def test_no_prediction_trajectory_drops_object():
    perc = PerceptionOut((PerceivedObject(
        "o", "Vehicle", OrientedBox((0.0, 0.0), (2.0, 1.0), 0.0), (2.0, 0.0)),))
    fault = FaultSpec(ComponentId.PREDICTION, "no_prediction_trajectory",
                      Trigger(object_id="o"))
    out, changed = prediction_tick([perc], [fault], 0)
    assert changed and out.trajectories == ()


def test_wrong_prediction_static_mode():
    perc = PerceptionOut((PerceivedObject(
        "o", "Vehicle", OrientedBox((10.0, 0.0), (2.0, 1.0), 0.0), (4.0, 0.0)),))
    fault = FaultSpec(ComponentId.PREDICTION, "wrong_prediction_trajectory",
                      Trigger(object_id="o"), magnitude={"mode": "static"})
    out, changed = prediction_tick([perc], [fault], 0)
    assert changed
    assert all((x, y) == (10.0, 0.0) for _, x, y in out.trajectories[0].points)


# --- planning ---------------------------------------------------------------


def plan_setup(objects=None):
    sc = scenario_from_dict(straight_road_doc(t_max_ms=30000, objects=objects or []))
    ctx = make_planner_context(sc)
    return sc, ctx


def test_empty_road_cruises_at_limit():
    _, ctx = plan_setup()
    from causetrace.payloads import PredictionOut
    loc = LocalizationOut((5.0, 0.0), 0.0, 11.0)
    out, changed = planning_tick(PredictionOut(()), loc, ctx, [], 0)
    assert not changed
    assert out.decision == "Cruise"
    assert "cruise" in out.branch_tags
    assert max(pt.speed for pt in out.trajectory) <= 11.0 + 1e-9
    assert out.trajectory[0].p == (5.0, 0.0)


def test_static_obstacle_produces_stop_with_clearance():
    sc, ctx = plan_setup(objects=[{
        "id": "blk", "kind": "StaticObstacle", "size": [0.8, 2.8, 0.5],
        "waypoints": [{"t_ms": 0, "p": [45.0, 0.0], "v": [0, 0], "a": [0, 0]}]}])
    from causetrace.substitutes import ideal_prediction
    pred = ideal_prediction(sc, 0)
    loc = LocalizationOut((30.0, 0.0), 0.0, 11.0)
    out, _ = planning_tick(pred, loc, ctx, [], 0)
    assert out.decision in ("Stop", "Emergency")
    end = out.trajectory[-1]
    assert end.speed == pytest.approx(0.0, abs=0.05)
    # Geometry oracle: the stop pose keeps front-of-ego clear of the box.
    front_x = end.p[0] + ctx.ego_half[0]
    assert front_x <= 45.0 - 0.4 - (0.3 + 0.5) + 0.2


def test_incorrect_speed_planning_keeps_cruise_through_region():
    sc, ctx = plan_setup(objects=[{
        "id": "blk", "kind": "StaticObstacle", "size": [0.8, 2.8, 0.5],
        "waypoints": [{"t_ms": 0, "p": [45.0, 0.0], "v": [0, 0], "a": [0, 0]}]}])
    from causetrace.substitutes import ideal_prediction
    pred = ideal_prediction(sc, 0)
    loc = LocalizationOut((20.0, 0.0), 0.0, 11.0)
    fault = FaultSpec(ComponentId.PLANNING, "incorrect_speed_planning", Trigger())
    out, changed = planning_tick(pred, loc, ctx, [fault], 0)
    assert changed
    assert min(pt.speed for pt in out.trajectory) >= 11.0 - 1e-6
    assert out.trajectory[-1].p[0] > 45.0  # sails through the obstacle region


def test_planner_nudges_around_small_static_intrusion():
    sc, ctx = plan_setup(objects=[static_object("cone", p=(40.0, 0.0))])
    from causetrace.substitutes import ideal_prediction
    pred = ideal_prediction(sc, 0)
    loc = LocalizationOut((20.0, 0.0), 0.0, 5.0)
    out, _ = planning_tick(pred, loc, ctx, [], 0)
    assert "nudge_around" in out.branch_tags
    assert out.decision in ("Nudge", "Stop")
    assert max(abs(pt.p[1]) for pt in out.trajectory) > 1.0


def test_red_signal_becomes_stop_target():
    doc = straight_road_doc(t_max_ms=20000, signals=[{
        "id": "s1", "stop_line": [60.0, 0.0],
        "phases": [{"t_start_ms": 0, "t_end_ms": 15000, "color": "Red"},
                   {"t_start_ms": 15000, "t_end_ms": 20000, "color": "Green"}]}])
    sc = scenario_from_dict(doc)
    ctx = make_planner_context(sc)
    from causetrace.payloads import PredictionOut
    loc = LocalizationOut((44.0, 0.0), 0.0, 11.0)
    red, _ = planning_tick(PredictionOut(()), loc, ctx, [], 1000)
    assert "red_stop" in red.branch_tags
    assert red.trajectory[-1].speed == pytest.approx(0.0, abs=0.05)
    assert red.trajectory[-1].p[0] + ctx.ego_half[0] <= 60.0
    green, _ = planning_tick(PredictionOut(()), loc, ctx, [], 16000)
    assert "red_stop" not in green.branch_tags


def test_planning_respects_decel_bound():
    sc, ctx = plan_setup(objects=[{
        "id": "blk", "kind": "StaticObstacle", "size": [0.8, 2.8, 0.5],
        "waypoints": [{"t_ms": 0, "p": [45.0, 0.0], "v": [0, 0], "a": [0, 0]}]}])
    from causetrace.substitutes import ideal_prediction
    pred = ideal_prediction(sc, 0)
    loc = LocalizationOut((5.0, 0.0), 0.0, 11.0)
    out, _ = planning_tick(pred, loc, ctx, [], 0)
    traj = out.trajectory
    for a, b in zip(traj, traj[1:]):
        dt = (b.t - a.t) / 1000.0
        assert abs(b.speed - a.speed) / dt <= 8.0 + 1e-6


# --- control ----------------------------------------------------------------


def cruise_plan(ctx, speed=10.0):
    from causetrace.payloads import PlanningOut, TrajPoint
    pts = tuple(TrajPoint(k * 100, (5.0 + speed * k * 0.1, 0.0), speed, 0.0)
                for k in range(41))
    return PlanningOut(pts, "Cruise", ("cruise",))


def test_control_equilibrium_near_zero():
    _, ctx = plan_setup()
    plan = cruise_plan(ctx)
    loc = LocalizationOut((5.0, 0.0), 0.0, 10.0)
    out, changed = control_tick(plan, loc, [], 0)
    assert not changed
    assert abs(out.accel_cmd) < 1e-3
    assert abs(out.steer) < 1e-3


def test_control_longitudinal_offset_fault():
    _, ctx = plan_setup()
    plan = cruise_plan(ctx)
    loc = LocalizationOut((5.0, 0.0), 0.0, 10.0)
    fault = FaultSpec(ComponentId.CONTROL, "wrong_longitudinal_command",
                      Trigger(t0=3000, t1=5000), magnitude={"offset": 2.0})
    inside, changed = control_tick(plan, loc, [fault], 4000)
    assert changed and inside.accel_cmd == pytest.approx(2.0, abs=1e-3)
    outside, changed = control_tick(plan, loc, [fault], 5000)
    assert not changed and abs(outside.accel_cmd) < 1e-3


def test_empty_plan_full_brake():
    from causetrace.payloads import PlanningOut
    loc = LocalizationOut((5.0, 0.0), 0.0, 10.0)
    out, _ = control_tick(PlanningOut((), "Stop", ()), loc, [], 0)
    assert out.accel_cmd == -8.0
    assert out.steer == 0.0


# --- localization -----------------------------------------------------------


def test_localization_exact_truth():
    ego = EgoState((12.0, 0.5), 0.1, 8.0, 0.3, 4000)
    out, changed = localization_tick(ego, [], 4000)
    assert not changed
    assert out.p == ego.p and out.speed == ego.speed


def test_lateral_localization_fault_and_window():
    ego = EgoState((12.0, 0.0), 0.0, 8.0, 0.0, 4000)
    fault = FaultSpec(ComponentId.LOCALIZATION, "wrong_lateral_localization",
                      Trigger(t0=3000, t1=6000), magnitude={"offset": 1.5})
    inside, changed = localization_tick(ego, [fault], 4000)
    assert changed and inside.p == pytest.approx((12.0, 1.5))
    outside, changed = localization_tick(ego, [fault], 6000)
    assert not changed and outside.p == (12.0, 0.0)


def test_fault_kind_component_mismatch_rejected():
    with pytest.raises(ValueError):
        FaultSpec(ComponentId.PREDICTION, "miss_detection", Trigger())
