"""Deterministic clock-driven scheduler: one run = one trace.

SimTime advances in 1 ms ticks. At each tick the due components fire in a fixed
priority order (localization, perception, prediction, planning, control), then
the world integrates 1 ms of ego motion from the latest control command (or
along the planning trajectory when control is substituted). The ego log is
sampled at 100 Hz; a contact (box distance exactly zero) stops the run early.
Identical inputs produce byte-identical serialized traces.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .faults import FaultSpec
from .geometry import OrientedBox, min_obb_distance, obb_separation_at_least
from .middleware import Bus, ComponentId, TICK_PRIORITY, Trace, Verdict
from .oracles import OracleConfig, evaluate
from .payloads import LocalizationOut, PerceptionOut, PerceivedObject
from .pipeline import (PlannerParams, control_tick, localization_tick,
                       make_planner_context, perception_tick, planning_tick,
                       prediction_tick)
from .scenario import Scenario, SimTime, Waypoint
from .substitutes import (IdealFromState, OnlineStateTracker, QuantizationUnits,
                          SubstitutionPlan, derived_control, ideal_localization,
                          ideal_perception, ideal_prediction, sim_control_apply,
                          substitution_active)
from .world import EgoState, ObjectTracker, SENSOR_RANGE, step_ego

SAMPLE_MS = 10  # ego log and state tracking at 100 Hz

DEFAULT_PERIODS = {
    ComponentId.LOCALIZATION: 10,   # 100 Hz
    ComponentId.PERCEPTION: 100,    # 10 Hz
    ComponentId.PREDICTION: 100,    # 10 Hz
    ComponentId.PLANNING: 100,      # 10 Hz
    ComponentId.CONTROL: 10,        # 100 Hz
}


class SimPanic(Exception):
    def __init__(self, component: ComponentId, t: SimTime, cause: BaseException,
                 trace: Trace):
        self.component = component
        self.t = t
        self.cause = cause
        self.trace = trace
        super().__init__(f"{component.value} panicked at t={t}: {cause!r}")


@dataclass
class AdsConfig:
    periods: dict[ComponentId, int] = field(default_factory=lambda: dict(DEFAULT_PERIODS))
    faults: list[FaultSpec] = field(default_factory=list)
    planner_params: PlannerParams = field(default_factory=PlannerParams)
    units: QuantizationUnits = field(default_factory=QuantizationUnits)
    sensor_range: float = SENSOR_RANGE
    driving: str = "clock"  # all five components are clock-driven
    use_best_effort_planner: bool = False


@dataclass
class RunHooks:
    substitution: SubstitutionPlan = field(default_factory=SubstitutionPlan)
    wrappers: dict[ComponentId, Callable] = field(default_factory=dict)


def _component_rng(seed: int, component: ComponentId) -> random.Random:
    salt = {"perception": 1, "prediction": 2, "planning": 3,
            "control": 4, "localization": 5}[component.value]
    return random.Random((seed * 1_000_003 + salt * 7_919) % (1 << 63))


def run_scheduler(scenario: Scenario, ads: AdsConfig, hooks: RunHooks | None = None) -> Trace:
    hooks = hooks or RunHooks()
    plan_modes = {c: hooks.substitution.mode_of(c) for c in ComponentId}
    bus = Bus()
    trace = bus.trace
    ctx = make_planner_context(scenario, ads.planner_params)
    ego = EgoState(p=scenario.a_init[0], heading=scenario.a_init[1], speed=0.0,
                   accel=0.0, t=0)
    ego_half = (scenario.ego_size[0] / 2.0, scenario.ego_size[1] / 2.0)
    ego_r = math.hypot(*ego_half)
    trackers = [ObjectTracker(o) for o in scenario.objects]
    obj_half = [(o.size[0] / 2.0, o.size[1] / 2.0) for o in scenario.objects]
    obj_r = [math.hypot(*h) for h in obj_half]
    obj_heading = [_initial_heading(o) for o in scenario.objects]
    state_tracker = OnlineStateTracker(ads.units)
    faults = {c: [f for f in ads.faults if f.target is c] for c in ComponentId}
    rngs = {c: _component_rng(scenario.seed, c) for c in ComponentId}
    perc_history: list[PerceptionOut] = []
    periods = ads.periods
    collided = False

    def truth_at(t: SimTime, origin, sensor_range) -> list:
        out = []
        rng2 = sensor_range * sensor_range
        for i, trk in enumerate(trackers):
            p, v = trk.pose_at(t)
            dx, dy = p[0] - origin[0], p[1] - origin[1]
            if dx * dx + dy * dy > rng2:
                continue
            if v != (0.0, 0.0):
                obj_heading[i] = math.atan2(v[1], v[0])
            out.append((i, p, v, obj_heading[i]))
        return out

    def active(component: ComponentId) -> bool:
        return substitution_active(plan_modes[component], state_tracker.index)

    def fire(component: ComponentId, t: SimTime) -> None:
        wrapper = hooks.wrappers.get(component)
        try:
            if wrapper is not None:
                payload, changed, inputs = wrapper(t=t, bus=bus, ego=ego, scenario=scenario)
                bus.record_execution(component, inputs,
                                     bus.publish(component, payload, t, changed))
                return
            if component is ComponentId.LOCALIZATION:
                if active(component):
                    payload, changed = ideal_localization(ego), False
                else:
                    payload, changed = localization_tick(ego, faults[component], t)
                msg = bus.publish(component, payload, t, changed)
                bus.record_execution(component, {}, msg)
            elif component is ComponentId.PERCEPTION:
                loc_msg = bus.latest(ComponentId.LOCALIZATION)
                believed: LocalizationOut = loc_msg.payload
                if active(component):
                    payload, changed = ideal_perception(scenario, t, ego.p,
                                                        ads.sensor_range), False
                else:
                    delta = (believed.p[0] - ego.p[0], believed.p[1] - ego.p[1])
                    sensed = []
                    for i, p, v, heading in truth_at(t, ego.p, ads.sensor_range):
                        center = (p[0] + delta[0], p[1] + delta[1])
                        sensed.append(_SensedObject(scenario.objects[i].id,
                                                    scenario.objects[i].kind,
                                                    OrientedBox(center, obj_half[i], heading),
                                                    v))
                    payload, changed = perception_tick(sensed, faults[component],
                                                       rngs[component], t, believed.heading)
                msg = bus.publish(component, payload, t, changed)
                bus.record_execution(component, {"localization": loc_msg.seq}, msg)
            elif component is ComponentId.PREDICTION:
                perc_msg = bus.latest(ComponentId.PERCEPTION)
                if active(component):
                    payload, changed = ideal_prediction(scenario, t), False
                else:
                    perc_history.append(perc_msg.payload)
                    if len(perc_history) > 5:
                        del perc_history[0]
                    payload, changed = prediction_tick(perc_history, faults[component], t)
                msg = bus.publish(component, payload, t, changed)
                bus.record_execution(component, {"perception": perc_msg.seq}, msg)
            elif component is ComponentId.PLANNING:
                pred_msg = bus.latest(ComponentId.PREDICTION)
                loc_msg = bus.latest(ComponentId.LOCALIZATION)
                if ads.use_best_effort_planner:
                    from .substitutes import best_effort_planning
                    payload, changed = best_effort_planning(scenario, ctx, ego, t), False
                else:
                    payload, changed = planning_tick(pred_msg.payload, loc_msg.payload,
                                                     ctx, faults[component], t)
                msg = bus.publish(component, payload, t, changed)
                bus.record_execution(component, {"prediction": pred_msg.seq,
                                                 "localization": loc_msg.seq}, msg)
            elif component is ComponentId.CONTROL:
                plan_msg = bus.latest(ComponentId.PLANNING)
                loc_msg = bus.latest(ComponentId.LOCALIZATION)
                if active(component):
                    payload, changed = derived_control(
                        plan_msg.payload if plan_msg else None, ego.speed, t), False
                else:
                    payload, changed = control_tick(plan_msg.payload if plan_msg else None,
                                                    loc_msg.payload, faults[component], t)
                msg = bus.publish(component, payload, t, changed)
                bus.record_execution(component, {"planning": plan_msg.seq if plan_msg else 0,
                                                 "localization": loc_msg.seq}, msg)
        except Exception as exc:  # component panic: diagnose and abort the run
            trace.diagnostics.append(f"panic component={component.value} t={t} err={exc!r}")
            raise SimPanic(component, t, exc, trace) from exc

    t = 0
    while t < scenario.t_max:
        if t % SAMPLE_MS == 0:
            wp = Waypoint(p=ego.p, v=ego.velocity(), a=ego.accel_vec(), t=t)
            trace.ego_log.append(wp)
            idx, key, ordinal = state_tracker.observe(wp.p, wp.v, wp.a)
            for comp, mode in plan_modes.items():
                if isinstance(mode, IdealFromState) and idx == mode.index \
                        and mode.key is not None and (key, ordinal) != (mode.key, mode.ordinal):
                    trace.diagnostics.append(
                        f"state-mismatch component={comp.value} index={idx}")
            if _contact(ego, ego_half, ego_r, trackers, obj_half, obj_r, obj_heading, t,
                        trace):
                collided = True
                break
        for component in TICK_PRIORITY:
            if t % periods[component] == 0:
                fire(component, t)
        if active(ComponentId.CONTROL):
            plan_msg = bus.latest(ComponentId.PLANNING)
            nxt = sim_control_apply(plan_msg.payload if plan_msg else None, t + 1, ego)
            accel = (nxt.speed - ego.speed) * 1000.0
            ego = EgoState(nxt.p, nxt.heading, nxt.speed, accel, t + 1)
        else:
            cmd = bus.latest(ComponentId.CONTROL)
            if cmd is None:
                ego = step_ego(ego, -8.0, 0.0, 1)
            else:
                ego = step_ego(ego, cmd.payload.accel_cmd, cmd.payload.steer, 1)
        t += 1
    if not collided and scenario.t_max % SAMPLE_MS == 0:
        trace.ego_log.append(Waypoint(p=ego.p, v=ego.velocity(), a=ego.accel_vec(),
                                      t=scenario.t_max))
    return trace


def _initial_heading(obj) -> float:
    for w in obj.waypoints:
        if w.v != (0.0, 0.0):
            return math.atan2(w.v[1], w.v[0])
    if obj.heading_override is not None:
        return obj.heading_override
    return 0.0


class _SensedObject:
    __slots__ = ("id", "kind", "box", "v")

    def __init__(self, obj_id, kind, box, v):
        self.id = obj_id
        self.kind = kind
        self.box = box
        self.v = v


def _contact(ego: EgoState, ego_half, ego_r, trackers, obj_half, obj_r, obj_heading,
             t: SimTime, trace: Trace) -> bool:
    ego_box = None
    for i, trk in enumerate(trackers):
        p, v = trk.pose_at(t)
        dx, dy = p[0] - ego.p[0], p[1] - ego.p[1]
        lim = ego_r + obj_r[i]
        if dx * dx + dy * dy > lim * lim:
            continue
        if ego_box is None:
            ego_box = OrientedBox(ego.p, ego_half, ego.heading)
        heading = math.atan2(v[1], v[0]) if v != (0.0, 0.0) else obj_heading[i]
        other = OrientedBox(p, obj_half[i], heading)
        if obb_separation_at_least(ego_box, other, 1e-9):
            continue
        if min_obb_distance(ego_box, other) <= 0.0:
            trace.diagnostics.append(f"contact t={t} object={trk.obj.id}")
            return True
    return False


# ---------------------------------------------------------------------------
# rtest / dtest entry points


@dataclass
class RunResult:
    verdict: Verdict
    ego_log: list[Waypoint]
    trace: Trace


def rtest(scenario: Scenario, ads: AdsConfig, oracles: OracleConfig) -> RunResult:
    """One full simulated run plus the violation verdict over its artifacts."""
    trace = run_scheduler(scenario, ads, RunHooks())
    verdict = evaluate(trace.ego_log, scenario, oracles)
    trace.verdict = verdict
    return RunResult(verdict, trace.ego_log, trace)


def run_with_substitution(scenario: Scenario, ads: AdsConfig, plan: SubstitutionPlan,
                          oracles: OracleConfig) -> tuple[Verdict, Trace]:
    trace = run_scheduler(scenario, ads, RunHooks(substitution=plan))
    verdict = evaluate(trace.ego_log, scenario, oracles)
    trace.verdict = verdict
    return verdict, trace
