import math

import pytest

from causetrace.geometry import OrientedBox, min_obb_distance
from causetrace.pipeline import make_planner_context
from causetrace.scenario import bbox_at, object_pose_at, scenario_from_dict
from causetrace.substitutes import best_effort_planning
from causetrace.world import EgoState
from conftest import static_object, straight_road_doc


def test_empty_road_reaches_goal():
    sc = scenario_from_dict(straight_road_doc(t_max_ms=20000, dest_x=40.0))
    ctx = make_planner_context(sc)
    ego = EgoState((5.0, 0.0), 0.0, 0.0, 0.0, 0)
    plan = best_effort_planning(sc, ctx, ego, 0)
    assert "infeasible" not in plan.branch_tags
    end = plan.trajectory[-1]
    assert end.p[0] == pytest.approx(40.0, abs=1.0)
    assert end.speed <= 0.5


def test_fully_blocked_corridor_is_infeasible_stop():
    wall = static_object("wall", size=(1.0, 8.0, 1.0), p=(20.0, 0.0))
    sc = scenario_from_dict(straight_road_doc(t_max_ms=20000, dest_x=40.0,
                                              objects=[wall], lanes=1))
    ctx = make_planner_context(sc)
    ego = EgoState((15.0, 0.0), 0.0, 2.0, 0.0, 0)
    plan = best_effort_planning(sc, ctx, ego, 0)
    assert "infeasible" in plan.branch_tags
    assert plan.decision == "Stop"
    assert all(pt.p == ego.p for pt in plan.trajectory)


def test_partially_blocked_lane_clears_all_boxes():
    cone = static_object("cone", p=(20.0, 0.0))
    sc = scenario_from_dict(straight_road_doc(t_max_ms=20000, dest_x=40.0,
                                              objects=[cone]))
    ctx = make_planner_context(sc)
    ego = EgoState((5.0, 0.0), 0.0, 0.0, 0.0, 0)
    plan = best_effort_planning(sc, ctx, ego, 0)
    assert "infeasible" not in plan.branch_tags
    assert plan.trajectory[-1].p[0] == pytest.approx(40.0, abs=1.0)
    # Post-hoc collision audit: every pose keeps the safety gap to every box.
    c = ctx.params.safe_gap
    for pt in plan.trajectory:
        ego_box = OrientedBox(pt.p, ctx.ego_half, pt.heading)
        for obj in sc.objects:
            d = min_obb_distance(ego_box, bbox_at(obj, pt.t))
            assert d >= c - 1e-9, (pt.t, pt.p, d)


def test_dynamic_bounds_respected():
    sc = scenario_from_dict(straight_road_doc(t_max_ms=20000, dest_x=40.0))
    ctx = make_planner_context(sc)
    ego = EgoState((5.0, 0.0), 0.0, 0.0, 0.0, 0)
    plan = best_effort_planning(sc, ctx, ego, 0)
    for a, b in zip(plan.trajectory, plan.trajectory[1:]):
        dt = (b.t - a.t) / 1000.0
        assert b.speed <= 11.0 + 1e-9
        assert abs(b.speed - a.speed) / dt <= 8.0 + 1e-6
