"""System-level violation detection over ego logs, plus per-message planning checks.

Three checks: safe distance (hazardous closeness or contact to any traffic
object), driving mission (final position reaches the destination), and speeding
(lane speed limit plus a tolerance that absorbs controller overshoot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .geometry import OrientedBox, min_obb_distance, obb_separation_at_least, vec_dist
from .middleware import Verdict
from .payloads import PlanningOut
from .pipeline import PlannerContext
from .scenario import (Scenario, SimTime, Waypoint, bbox_at, lane_at, object_pose_at,
                       project_on_polyline)
from .world import ObjectTracker

SAFE_DISTANCE = "safe_distance"
MISSION = "mission"
SPEEDING = "speeding"
ALL_KINDS = (SAFE_DISTANCE, MISSION, SPEEDING)


@dataclass(frozen=True)
class OracleConfig:
    enabled: tuple[str, ...] = ALL_KINDS
    safe_distance_c: float = 0.3
    dest_tolerance: float = 2.0
    speed_tolerance: float = 0.5

    def __post_init__(self):
        assert self.safe_distance_c >= 0
        assert self.dest_tolerance >= 0 and self.speed_tolerance >= 0


def _ego_heading_series(ego_log: list[Waypoint], init_heading: float) -> list[float]:
    headings = []
    last = init_heading
    for w in ego_log:
        if w.v != (0.0, 0.0):
            last = math.atan2(w.v[1], w.v[0])
        headings.append(last)
    return headings


def check_safe_distance(ego_log: list[Waypoint], scenario: Scenario,
                        c: float) -> tuple[SimTime, str, float, str] | None:
    """Earliest (t, object id, distance, detail) with box distance < c; None if safe."""
    if not ego_log:
        return None
    half = (scenario.ego_size[0] / 2.0, scenario.ego_size[1] / 2.0)
    ego_r = math.hypot(*half)
    headings = _ego_heading_series(ego_log, scenario.a_init[1])
    trackers = [ObjectTracker(o) for o in scenario.objects]
    radii = [math.hypot(o.size[0] / 2.0, o.size[1] / 2.0) for o in scenario.objects]
    for w, heading in zip(ego_log, headings):
        ego_box = OrientedBox(w.p, half, heading)
        for obj, trk, r in zip(scenario.objects, trackers, radii):
            p, _ = trk.pose_at(w.t)
            dx, dy = p[0] - w.p[0], p[1] - w.p[1]
            lim = ego_r + r + c
            if dx * dx + dy * dy > lim * lim:
                continue
            other = bbox_at(obj, w.t)
            if obb_separation_at_least(ego_box, other, c):
                continue
            d = min_obb_distance(ego_box, other)
            if d < c:
                # Rear approach: object center behind the ego rear axle line.
                lx = dx * math.cos(heading) + dy * math.sin(heading)
                detail = "rear-approach" if lx < -half[0] else "front"
                return w.t, obj.id, d, detail
    return None


def check_mission(ego_log: list[Waypoint], a_dest, tolerance: float) -> bool:
    if not ego_log:
        return False
    return vec_dist(ego_log[-1].p, a_dest) <= tolerance


def check_speeding(ego_log: list[Waypoint], lane_map, tolerance: float
                   ) -> tuple[SimTime, float, float] | None:
    """Earliest (t, speed, limit) sample exceeding the lane limit; off-lane skipped."""
    for w in ego_log:
        speed = math.hypot(*w.v)
        if speed < 0.5:
            continue  # cannot exceed any positive limit worth checking
        hit = lane_at(lane_map, w.p)
        if hit is None:
            continue
        limit = hit[0].speed_limit
        if speed > limit + tolerance:
            return w.t, speed, limit
    return None


def evaluate(ego_log: list[Waypoint], scenario: Scenario, config: OracleConfig) -> Verdict:
    violations: list[dict] = []
    if SAFE_DISTANCE in config.enabled:
        hit = check_safe_distance(ego_log, scenario, config.safe_distance_c)
        if hit is not None:
            t, obj_id, d, detail = hit
            violations.append({"kind": SAFE_DISTANCE, "t": t, "object_id": obj_id,
                               "distance": d, "detail": detail})
    if MISSION in config.enabled:
        if not check_mission(ego_log, scenario.a_dest, config.dest_tolerance):
            t = ego_log[-1].t if ego_log else 0
            violations.append({"kind": MISSION, "t": t,
                               "detail": "destination not reached"})
    if SPEEDING in config.enabled:
        hit = check_speeding(ego_log, scenario.map, config.speed_tolerance)
        if hit is not None:
            t, speed, limit = hit
            violations.append({"kind": SPEEDING, "t": t, "speed": speed, "limit": limit})
    violations.sort(key=lambda v: v["t"])
    return Verdict(passed=not violations, violations=violations)


# ---------------------------------------------------------------------------
# per-message planning checks (used by the planning message scan)

STALL_PERSISTENCE_MS = 3000
STALL_LOOKAHEAD = 30.0
HELD_DISPLACEMENT = 0.5


@dataclass(frozen=True)
class PlanningCheckContext:
    """Everything a single planning message is judged against.

    `held_duration_ms` is how long the trajectory stream has been empty/held up
    to and including this message; the caller derives it from the message row so
    the check itself stays a pure function.
    """

    scenario: Scenario
    planner_ctx: PlannerContext
    config: OracleConfig
    ego_p: tuple[float, float]  # believed ego position when the message was made
    held_duration_ms: int = 0


def trajectory_is_held(plan: PlanningOut) -> bool:
    traj = plan.trajectory
    if len(traj) < 2:
        return True
    disp = max(vec_dist(pt.p, traj[0].p) for pt in traj)
    return disp < HELD_DISPLACEMENT and traj[-1].speed < 0.2


def _corridor_blocked_ahead(ctx: PlanningCheckContext, t: SimTime) -> bool:
    from .geometry import point_to_obb_distance
    from .scenario import point_on_polyline

    planner = ctx.planner_ctx
    s0, _, _ = project_on_polyline(planner.route, ctx.ego_p)
    band = planner.ego_half[1] + ctx.config.safe_distance_c + 0.2
    for obj in ctx.scenario.objects:
        p, _, _ = object_pose_at(obj, t)
        s, lat, _ = project_on_polyline(planner.route, p)
        reach = math.hypot(obj.size[0] / 2.0, obj.size[1] / 2.0)
        if s0 - reach <= s <= s0 + STALL_LOOKAHEAD + reach and abs(lat) <= band + reach:
            box = bbox_at(obj, t)
            steps = max(2, int(STALL_LOOKAHEAD / 2.0))
            for k in range(steps + 1):
                q, _ = point_on_polyline(planner.route, s0 + STALL_LOOKAHEAD * k / steps)
                if point_to_obb_distance(q, box) <= band:
                    return True
    for sig in ctx.scenario.signals:
        s_line, lat_line, _ = project_on_polyline(planner.route, sig.stop_line)
        if abs(lat_line) <= 3.0 and s0 <= s_line <= s0 + STALL_LOOKAHEAD + 10.0 \
                and sig.color_at(t) == "Red":
            return True
    return False


def planning_message_violates(plan: PlanningOut, t: SimTime,
                              ctx: PlanningCheckContext) -> bool:
    """True iff executing this trajectory verbatim would violate the rules.

    (a) the planned poses come within c of a ground-truth object box at matched
    times, (b) a trajectory point exceeds the lane limit, or (c) the trajectory
    is empty/held while the mission is incomplete and nothing ahead justifies
    stopping (after the stall persistence window).
    """
    planner = ctx.planner_ctx
    c = ctx.config.safe_distance_c
    half = planner.ego_half
    ego_r = math.hypot(*half)

    for pt in plan.trajectory:
        ego_box = OrientedBox(pt.p, half, pt.heading)
        for obj in ctx.scenario.objects:
            p, _, _ = object_pose_at(obj, pt.t)
            reach = math.hypot(obj.size[0] / 2.0, obj.size[1] / 2.0)
            dx, dy = p[0] - pt.p[0], p[1] - pt.p[1]
            lim = ego_r + reach + c
            if dx * dx + dy * dy > lim * lim:
                continue
            if min_obb_distance(ego_box, bbox_at(obj, pt.t)) < c:
                return True
        if pt.speed > 0.5:
            hit = lane_at(ctx.scenario.map, pt.p)
            if hit is not None and pt.speed > hit[0].speed_limit + ctx.config.speed_tolerance:
                return True

    if trajectory_is_held(plan) and ctx.held_duration_ms >= STALL_PERSISTENCE_MS:
        if vec_dist(ctx.ego_p, ctx.scenario.a_dest) > ctx.config.dest_tolerance:
            if not _corridor_blocked_ahead(ctx, t):
                return True
    return False
