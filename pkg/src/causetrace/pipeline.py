"""The five pipeline components under test, each a pure tick function.

Components consume the latest subscribed messages and produce one output
payload; the declarative fault layer mutates outputs afterwards. The planner is
deliberately simple: follow the route lane, stop for space-time conflicts,
nudge around small static intrusions, stop at red lights and at the
destination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .faults import (FaultSpec, apply_control_faults, apply_localization_faults,
                     apply_perception_faults, apply_planning_faults,
                     apply_prediction_faults)
from .geometry import OrientedBox, Vec2, min_obb_distance, vec_dist
from .payloads import (ControlOut, LocalizationOut, PerceivedObject, PerceptionOut,
                       PlanningOut, PredictedTrajectory, PredictionOut, TrajPoint)
from .scenario import Scenario, SimTime, TrafficSignal, point_on_polyline, project_on_polyline
from .world import ACCEL_MAX, ACCEL_MIN, EgoState, STEER_MAX, TruthObject, WHEELBASE

PREDICTION_HORIZON_MS = 3000
PREDICTION_STEP_MS = 100


# ---------------------------------------------------------------------------
# perception


def perception_tick(truth: list[TruthObject], faults: list[FaultSpec], rng,
                    t: SimTime, ego_heading: float) -> tuple[PerceptionOut, bool]:
    """Ground truth as sensed (already range-filtered), then fault mutations."""
    out = PerceptionOut(tuple(PerceivedObject(o.id, o.kind, o.box, o.v) for o in truth))
    return apply_perception_faults(out, faults, t, ego_heading)


# ---------------------------------------------------------------------------
# prediction


def prediction_tick(perc_history: list[PerceptionOut], faults: list[FaultSpec],
                    t: SimTime) -> tuple[PredictionOut, bool]:
    """Constant-velocity extrapolation of the latest perception over 3 s."""
    latest = perc_history[-1]
    prev = perc_history[-2] if len(perc_history) > 1 else None
    trajs = []
    for o in latest.objects:
        vx, vy = o.v
        if not (math.isfinite(vx) and math.isfinite(vy)):
            vx = vy = 0.0
            if prev is not None:
                for po in prev.objects:
                    if po.id == o.id:
                        dt_s = PREDICTION_STEP_MS / 1000.0
                        vx = (o.box.center[0] - po.box.center[0]) / dt_s
                        vy = (o.box.center[1] - po.box.center[1]) / dt_s
                        break
        x0, y0 = o.box.center
        pts = tuple(
            (t + k * PREDICTION_STEP_MS,
             x0 + vx * k * PREDICTION_STEP_MS / 1000.0,
             y0 + vy * k * PREDICTION_STEP_MS / 1000.0)
            for k in range(PREDICTION_HORIZON_MS // PREDICTION_STEP_MS + 1)
        )
        trajs.append(PredictedTrajectory(o.id, o.kind, o.box.half_extents,
                                          o.box.heading, pts))
    return apply_prediction_faults(PredictionOut(tuple(trajs)), faults, t)


# ---------------------------------------------------------------------------
# planning


@dataclass(frozen=True)
class PlannerParams:
    # Matches the prediction horizon: the planner never commits to motion it
    # cannot de-conflict against predicted object futures.
    horizon_ms: int = 3000
    step_ms: int = 100
    accel: float = 2.0
    comfort_decel: float = 3.0
    max_decel: float = 8.0
    lateral_rate: float = 0.85          # m/s of lateral offset build-up
    safe_gap: float = 0.3               # mirrors the oracle constant c
    dest_stop_margin: float = 1.2       # stop this far short of the destination
    nudge_lookahead: float = 32.0
    max_nudge_offset: float = 2.2
    pass_speed: float = 5.0
    pass_zone_before: float = 25.0
    pass_zone_after: float = 10.0
    signal_lookahead: float = 60.0
    static_speed_eps: float = 0.3

    @property
    def conflict_clear(self) -> float:
        return self.safe_gap + 0.45

    @property
    def pass_clear(self) -> float:
        return self.safe_gap + 0.65


@dataclass
class PlannerContext:
    """Per-run immutable planning context derived from the scenario."""

    route: tuple[Vec2, ...]
    dest_s: float
    speed_limit: float
    signals: tuple[TrafficSignal, ...]
    ego_half: tuple[float, float]  # (length/2, width/2)
    params: PlannerParams = field(default_factory=PlannerParams)


def make_planner_context(scenario: Scenario, params: PlannerParams | None = None) -> PlannerContext:
    from .scenario import lane_at

    init_hit = lane_at(scenario.map, scenario.a_init[0])
    assert init_hit is not None
    route_lanes = [init_hit[0]]
    # Follow successors until the destination projects inside a lane of the chain.
    seen = {init_hit[0].id}
    while True:
        lane = route_lanes[-1]
        _, lat, _ = project_on_polyline(lane.centerline, scenario.a_dest)
        if abs(lat) <= lane.width / 2.0 + 1e-9:
            break
        nxt = [s for s in scenario.map.successors.get(lane.id, ()) if s not in seen]
        if not nxt:
            break
        route_lanes.append(scenario.map.lane_by_id(nxt[0]))
        seen.add(nxt[0])
    route: list[Vec2] = []
    for lane in route_lanes:
        for p in lane.centerline:
            if not route or p != route[-1]:
                route.append(p)
    dest_s, _, _ = project_on_polyline(tuple(route), scenario.a_dest)
    limit = min(ln.speed_limit for ln in route_lanes)
    return PlannerContext(
        route=tuple(route),
        dest_s=dest_s,
        speed_limit=limit,
        signals=scenario.signals,
        ego_half=(scenario.ego_size[0] / 2.0, scenario.ego_size[1] / 2.0),
        params=params or PlannerParams(),
    )


def _route_pose(ctx: PlannerContext, s: float, lat: float) -> tuple[Vec2, float]:
    p, heading = point_on_polyline(ctx.route, s)
    nx, ny = -math.sin(heading), math.cos(heading)
    return (p[0] + nx * lat, p[1] + ny * lat), heading


def _obstacle_route_interval(ctx: PlannerContext, box: OrientedBox) -> tuple[float, float, float, float]:
    """(s_min, s_max, lat_min, lat_max) of the box corners in route frame."""
    s_min = lat_min = math.inf
    s_max = lat_max = -math.inf
    for corner in box.corners():
        s, lat, _ = project_on_polyline(ctx.route, corner)
        s_min, s_max = min(s_min, s), max(s_max, s)
        lat_min, lat_max = min(lat_min, lat), max(lat_max, lat)
    return s_min, s_max, lat_min, lat_max


@dataclass
class _CandidateSpec:
    stop_s: float | None
    target_lat: float
    cap_zone: tuple[float, float] | None  # (s_from, s_to) with pass_speed cap
    emergency: bool = False


def _gen_trajectory(ctx: PlannerContext, t: SimTime, p0: Vec2, heading0: float,
                    speed0: float, s0: float, lat0: float,
                    spec: _CandidateSpec) -> tuple[TrajPoint, ...]:
    par = ctx.params
    n = par.horizon_ms // par.step_ms
    dt = par.step_ms / 1000.0
    pts: list[tuple[float, float, float]] = []  # (s, lat, speed)
    s, lat, v = s0, lat0, speed0
    for _ in range(n + 1):
        pts.append((s, lat, v))
        if spec.emergency:
            v_allow = 0.0
        else:
            v_allow = ctx.speed_limit
            if spec.cap_zone is not None and s <= spec.cap_zone[1]:
                # Ease into the pass-speed cap with a comfort-decel envelope.
                gap = max(0.0, spec.cap_zone[0] - s)
                v_allow = min(v_allow, math.sqrt(par.pass_speed ** 2
                                                 + 2.0 * par.comfort_decel * gap))
            rem_dest = (ctx.dest_s - par.dest_stop_margin) - s
            v_allow = min(v_allow, math.sqrt(max(0.0, 2.0 * par.comfort_decel * rem_dest)))
            if spec.stop_s is not None:
                rem = spec.stop_s - s
                v_allow = min(v_allow, math.sqrt(max(0.0, 2.0 * par.comfort_decel * rem)))
        if v_allow >= v:
            v = min(v + par.accel * dt, v_allow)
        else:
            v = max(v_allow, v - par.max_decel * dt)
        if spec.target_lat > lat:
            lat = min(spec.target_lat, lat + par.lateral_rate * dt)
        elif spec.target_lat < lat:
            lat = max(spec.target_lat, lat - par.lateral_rate * dt)
        s += v * dt
    out: list[TrajPoint] = []
    for k, (sk, latk, vk) in enumerate(pts):
        if k == 0:
            out.append(TrajPoint(t, p0, speed0, heading0))
            continue
        p, route_heading = _route_pose(ctx, sk, latk)
        prev = out[-1].p
        dx, dy = p[0] - prev[0], p[1] - prev[1]
        heading = math.atan2(dy, dx) if (dx * dx + dy * dy) > 1e-12 else out[-1].heading
        out.append(TrajPoint(t + k * par.step_ms, p, vk, heading))
    return tuple(out)


def _first_conflict(ctx: PlannerContext, traj: tuple[TrajPoint, ...],
                    pred: PredictionOut) -> tuple[int, float] | None:
    """Earliest (point index, route s of ego) where a predicted box gets too close."""
    from .geometry import obb_separation_at_least

    par = ctx.params
    threshold = par.conflict_clear
    ego_r = math.hypot(*ctx.ego_half)
    items = []
    for tr in pred.trajectories:
        if tr.kind == "Infrastructure":
            continue  # lane furniture is not an avoidance target
        pts = tr.points
        static = pts[0][1:] == pts[-1][1:]
        box0 = tr.box_at(pts[0][0]) if static else None
        step = pts[1][0] - pts[0][0] if len(pts) > 1 else 1
        items.append((tr, static, box0, math.hypot(*tr.half_extents), step))
    for k, pt in enumerate(traj):
        if k == 0:
            continue  # current pose is given, not plannable
        ego_box = None
        px, py = pt.p
        for tr, static, box0, r, step in items:
            if static:
                cx, cy = box0.center
            else:
                pts = tr.points
                u = (pt.t - pts[0][0]) / step
                i = int(u)
                if i < 0:
                    cx, cy = pts[0][1], pts[0][2]
                elif i >= len(pts) - 1:
                    cx, cy = pts[-1][1], pts[-1][2]
                else:
                    f = u - i
                    cx = pts[i][1] + (pts[i + 1][1] - pts[i][1]) * f
                    cy = pts[i][2] + (pts[i + 1][2] - pts[i][2]) * f
            dx, dy = cx - px, cy - py
            lim = ego_r + r + threshold
            if dx * dx + dy * dy > lim * lim:
                continue
            if ego_box is None:
                ego_box = OrientedBox(pt.p, ctx.ego_half, pt.heading)
            ob = box0 if static else tr.box_at(pt.t)
            if obb_separation_at_least(ego_box, ob, threshold):
                continue
            if min_obb_distance(ego_box, ob) < threshold:
                s, _, _ = project_on_polyline(ctx.route, pt.p)
                return k, s
    return None


def planning_tick(pred: PredictionOut, loc: LocalizationOut, ctx: PlannerContext,
                  faults: list[FaultSpec], t: SimTime) -> tuple[PlanningOut, bool]:
    par = ctx.params
    tags = ["route_follow"]
    s0, lat0, _ = project_on_polyline(ctx.route, loc.p)

    # Small static intrusions ahead: nudge around them.
    target_lat = 0.0
    cap_zone: tuple[float, float] | None = None
    nudge = None
    for tr in pred.trajectories:
        if tr.kind == "Infrastructure":
            continue  # lane furniture is owned by lane keeping, not nudging
        first = tr.points[0]
        last = tr.points[-1]
        horizon_s = (last[0] - first[0]) / 1000.0
        disp = math.hypot(last[1] - first[1], last[2] - first[2])
        if horizon_s > 0 and disp / horizon_s > par.static_speed_eps:
            continue  # moving object: handled by the conflict scan
        box0 = tr.box_at(first[0])
        s_min, s_max, lat_min, lat_max = _obstacle_route_interval(ctx, box0)
        if s_max < s0 or s_min > s0 + par.nudge_lookahead:
            continue
        body = ctx.ego_half[1] + par.conflict_clear + 0.1
        if lat_min > body or lat_max < -body:
            continue  # passable where it stands, no lateral action needed
        off_left = lat_max + par.pass_clear + ctx.ego_half[1]
        off_right = lat_min - par.pass_clear - ctx.ego_half[1]
        off = off_left if abs(off_left) <= abs(off_right) else off_right
        if abs(off) > par.max_nudge_offset:
            tags.append("corridor_blocked")
            continue  # too wide to nudge: conflict scan will stop for it
        if nudge is None or s_min < nudge[0]:
            nudge = (s_min, s_max, off)
    if nudge is not None:
        s_min, s_max, off = nudge
        if s0 < s_max + par.pass_zone_after:
            target_lat = off
            cap_zone = (s_min - par.pass_zone_before, s_max + par.pass_zone_after)
            tags.append("nudge_around")
    else:
        tags.append("corridor_clear")

    # Red signals ahead become stop targets.
    stop_s: float | None = None
    for sig in ctx.signals:
        s_line, lat_line, _ = project_on_polyline(ctx.route, sig.stop_line)
        if abs(lat_line) > 3.0 or s_line < s0:
            continue
        if s_line - s0 > par.signal_lookahead:
            continue
        if sig.color_at(t) == "Red":
            cand = s_line - ctx.ego_half[0] - 0.5
            stop_s = cand if stop_s is None else min(stop_s, cand)
            tags.append("red_stop")

    spec = _CandidateSpec(stop_s=stop_s, target_lat=target_lat, cap_zone=cap_zone)
    traj = _gen_trajectory(ctx, t, loc.p, loc.heading, loc.speed, s0, lat0, spec)
    conflict = _first_conflict(ctx, traj, pred)
    decision = "Cruise"
    if conflict is not None:
        tags.append("stop_for_conflict")
        resolved = False
        for backoff in (0.9, 1.6, 2.4, 3.5, 5.0, 7.0, 10.0):
            cand_stop = conflict[1] - ctx.ego_half[0] - backoff
            if cand_stop <= s0 + 0.2:
                break
            cand_spec = _CandidateSpec(
                stop_s=cand_stop if stop_s is None else min(stop_s, cand_stop),
                target_lat=target_lat, cap_zone=cap_zone)
            cand_traj = _gen_trajectory(ctx, t, loc.p, loc.heading, loc.speed, s0, lat0,
                                        cand_spec)
            if _first_conflict(ctx, cand_traj, pred) is None:
                traj = cand_traj
                decision = "Stop"
                resolved = True
                break
        if not resolved:
            tags.append("emergency_brake")
            traj = _gen_trajectory(ctx, t, loc.p, loc.heading, loc.speed, s0, lat0,
                                   _CandidateSpec(stop_s=None, target_lat=lat0,
                                                  cap_zone=None, emergency=True))
            decision = "Emergency"
    if decision == "Cruise":
        if target_lat != 0.0:
            decision = "Nudge"
        elif stop_s is not None or ctx.dest_s - s0 < 40.0:
            tags.append("dest_stop" if stop_s is None else "hold_stop")
            decision = "Stop" if ctx.dest_s - s0 < 40.0 or stop_s is not None else decision
        else:
            tags.append("cruise")

    out = PlanningOut(traj, decision, tuple(tags))
    return apply_planning_faults(out, faults, t, loc.p)


# ---------------------------------------------------------------------------
# control


CONTROL_KP = 1.8
CONTROL_SPEED_LOOKAHEAD_MS = 100


def _plan_speed_at(traj, t_q: SimTime) -> float:
    if t_q <= traj[0].t:
        return traj[0].speed
    for i in range(len(traj) - 1):
        if traj[i].t <= t_q < traj[i + 1].t:
            u = (t_q - traj[i].t) / (traj[i + 1].t - traj[i].t)
            return traj[i].speed + (traj[i + 1].speed - traj[i].speed) * u
    return traj[-1].speed


def control_tick(plan: PlanningOut | None, loc: LocalizationOut,
                 faults: list[FaultSpec], t: SimTime) -> tuple[ControlOut, bool]:
    """Pure-pursuit steering plus speed tracking with plan-slope feedforward."""
    if plan is None or len(plan.trajectory) < 2:
        return apply_control_faults(ControlOut(ACCEL_MIN, 0.0), faults, t, loc.p)
    traj = plan.trajectory

    t_q = t + CONTROL_SPEED_LOOKAHEAD_MS
    v_target = _plan_speed_at(traj, t_q)
    a_ff = (_plan_speed_at(traj, t_q + 200) - v_target) / 0.2
    err = v_target - loc.speed
    if abs(err) < 0.02:
        err = 0.0  # deadband keeps equilibrium commands exactly zero
    accel = min(ACCEL_MAX, max(ACCEL_MIN, a_ff + CONTROL_KP * err))

    lookahead = max(3.0, 0.5 * loc.speed)
    # Nearest trajectory point, then march forward to the lookahead target.
    best_i, best_d = 0, math.inf
    for i, pt in enumerate(traj):
        d = vec_dist(pt.p, loc.p)
        if d < best_d:
            best_d, best_i = d, i
    target = traj[-1].p
    acc = 0.0
    for i in range(best_i, len(traj) - 1):
        acc += vec_dist(traj[i].p, traj[i + 1].p)
        if acc >= lookahead:
            target = traj[i + 1].p
            break
    dx, dy = target[0] - loc.p[0], target[1] - loc.p[1]
    dist = math.hypot(dx, dy)
    if dist < 0.3:
        steer = 0.0
    else:
        alpha = math.atan2(dy, dx) - loc.heading
        alpha = math.atan2(math.sin(alpha), math.cos(alpha))
        ld = max(lookahead, dist)
        steer = math.atan2(2.0 * WHEELBASE * math.sin(alpha), ld)
        steer = min(STEER_MAX, max(-STEER_MAX, steer))
        if abs(steer) < 5e-4:
            steer = 0.0  # freeze heading at equilibrium instead of dithering
    return apply_control_faults(ControlOut(accel, steer), faults, t, loc.p)


# ---------------------------------------------------------------------------
# localization


def localization_tick(true_ego: EgoState, faults: list[FaultSpec],
                      t: SimTime) -> tuple[LocalizationOut, bool]:
    out = LocalizationOut(true_ego.p, true_ego.heading, true_ego.speed)
    return apply_localization_faults(out, faults, t)
