"""Violation cause attribution: which component, then which output message.

Component level: one counterfactual re-run with all four substitutable
components idealized decides whether planning is the cause (violation
persists); otherwise the components are probed one by one in a fixed order and
the first whose substitution flips the verdict is returned.

Message level: for planning, a zero-simulation scan for the first output
message that itself violates the driving rules; for everything else, a binary
search over the quantized vehicle-dynamic states of the original trace,
re-running with the substitute active from a candidate state onward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .middleware import ComponentId, Message, Trace
from .oracles import (OracleConfig, PlanningCheckContext, planning_message_violates,
                      trajectory_is_held)
from .pipeline import make_planner_context
from .runner import AdsConfig, RunResult, rtest, run_with_substitution
from .scenario import Scenario
from .substitutes import (DynamicState, IdealAll, IdealFromState, IdealWithinStates,
                          QuantizationUnits, SubstitutionPlan, split_trace)

PROBE_ORDER = (ComponentId.PERCEPTION, ComponentId.PREDICTION,
               ComponentId.CONTROL, ComponentId.LOCALIZATION)
SUBSTITUTABLE = PROBE_ORDER  # everything but planning


class NoViolation(Exception):
    """Attribution requires a violating scenario run."""


class Unattributable(Exception):
    """No single component substitution flips the verdict."""

    def __init__(self, outcomes: dict[str, bool]):
        self.outcomes = outcomes
        super().__init__(f"no single substitution flips the verdict: {outcomes}")


class MonotonicityViolation(Exception):
    """The suffix predicate is not clean-monotone for this instance."""

    def __init__(self, outcomes: list[tuple[int, bool]]):
        self.outcomes = outcomes
        super().__init__("dtest suffix predicate is not monotone")


class NoViolatingPlanningMessage(Exception):
    """The planning row contains no message that violates the driving rules."""


class DtestSession:
    """Runs and counts counterfactual re-runs for one attribution task."""

    def __init__(self, scenario: Scenario, ads: AdsConfig, oracles: OracleConfig):
        self.scenario = scenario
        self.ads = ads
        self.oracles = oracles
        self.calls = 0
        self._cache: dict[tuple, bool] = {}

    def passed(self, plan: SubstitutionPlan) -> bool:
        key = tuple(sorted((c.value, repr(m)) for c, m in plan.modes.items()))
        if key in self._cache:
            return self._cache[key]
        self.calls += 1
        verdict, _ = run_with_substitution(self.scenario, self.ads, plan, self.oracles)
        self._cache[key] = verdict.passed
        return verdict.passed


def attribute_component(session: DtestSession, original: RunResult,
                        probe_all: bool = False
                        ) -> tuple[ComponentId, dict[str, bool], int]:
    """Algorithm: rule out planning first, then probe components in order.

    Returns (component, probe outcomes, dtest calls used at component level).
    """
    if original.verdict.passed:
        raise NoViolation("scenario run passed; nothing to attribute")
    calls_before = session.calls
    outcomes: dict[str, bool] = {}
    combined = SubstitutionPlan.ideal_all(*SUBSTITUTABLE)
    combined_pass = session.passed(combined)
    outcomes["combined"] = combined_pass
    if not combined_pass:
        # Violation survives ideal sensing and actuation: planning is the cause.
        return ComponentId.PLANNING, outcomes, session.calls - calls_before
    found: ComponentId | None = None
    for component in PROBE_ORDER:
        ok = session.passed(SubstitutionPlan.ideal_all(component))
        outcomes[component.value] = ok
        if ok and found is None:
            found = component
            if not probe_all:
                break
    if found is None:
        raise Unattributable(outcomes)
    return found, outcomes, session.calls - calls_before


def _component_states(states: list[DynamicState], trace: Trace,
                      component: ComponentId) -> list[int]:
    """State indices that contain at least one message of the component."""
    present = sorted({m.state_index for m in trace.rows[component]
                      if m.state_index is not None})
    return present


def _focus_in_state(trace: Trace, component: ComponentId, state_index: int) -> Message:
    row = trace.rows[component]
    best = None
    for m in row:
        if m.state_index is not None and m.state_index <= state_index:
            best = m
    assert best is not None, "boundary state holds no message of the component"
    return best


def _from_state_plan(component: ComponentId, states: list[DynamicState],
                     index: int) -> SubstitutionPlan:
    st = states[index - 1]
    return SubstitutionPlan({component: IdealFromState(index, st.key, st.ordinal)})


def attribute_message_nonplanning(session: DtestSession, trace: Trace,
                                  states: list[DynamicState],
                                  component: ComponentId
                                  ) -> tuple[Message, int]:
    """Binary search for the last state whose suffix substitution still prevents
    the violation; returns (focus message, dtest calls used)."""
    calls_before = session.calls
    n = len(states)
    # Index 1 is the known-good endpoint: substitution from state 1 equals the
    # whole-component substitution already verified at component level.
    if n == 1:
        row = trace.rows[component]
        return row[-1], session.calls - calls_before
    if session.passed(_from_state_plan(component, states, n)):
        return _focus_in_state(trace, component, n), session.calls - calls_before
    left, right = 1, n
    while left + 1 < right:
        mid = (left + right) // 2
        if session.passed(_from_state_plan(component, states, mid)):
            left = mid  # the decisive message is at or after mid
        else:
            right = mid
    return _focus_in_state(trace, component, left), session.calls - calls_before


def audit_suffix_monotonicity(session: DtestSession, trace: Trace,
                              states: list[DynamicState], component: ComponentId
                              ) -> tuple[bool, int | None, list[tuple[int, bool]]]:
    """Exhaustive suffix scan of the dtest predicate.

    Between two states that contain no message of the component the substituted
    message set is identical, so the predicate is constant there; evaluating it
    at every state that carries a component message is the full scan. Returns
    (monotone, last passing index, outcomes).
    """
    indices = _component_states(states, trace, component)
    if 1 not in indices:
        indices = [1] + indices
    outcomes = []
    for idx in indices:
        outcomes.append((idx, session.passed(_from_state_plan(component, states, idx))))
    flips = sum(1 for (_, a), (_, b) in zip(outcomes, outcomes[1:]) if a != b)
    monotone = flips <= 1 and (flips == 0 or outcomes[0][1])
    boundary = None
    for idx, ok in outcomes:
        if ok:
            boundary = idx
    if boundary is not None:
        # The predicate is constant up to the next component-message state, so
        # the boundary extends to just before it.
        later = [i for i in indices if i > boundary]
        if later:
            boundary = later[0] - 1
        else:
            boundary = len(states)
    return monotone, boundary, outcomes


def attribute_message_planning(trace: Trace, scenario: Scenario, ads: AdsConfig,
                               oracles: OracleConfig) -> Message:
    """First planning output message that itself violates the driving rules."""
    planner_ctx = make_planner_context(scenario, ads.planner_params)
    ego_by_t = {w.t: w for w in trace.ego_log}
    sample_ts = sorted(ego_by_t)
    held_since: int | None = None
    for msg in trace.rows[ComponentId.PLANNING]:
        plan = msg.payload
        if trajectory_is_held(plan):
            if held_since is None:
                held_since = msg.t_pub
            held_ms = msg.t_pub - held_since
        else:
            held_since = None
            held_ms = 0
        t_key = msg.t_pub if msg.t_pub in ego_by_t else max(
            (t for t in sample_ts if t <= msg.t_pub), default=sample_ts[0])
        ctx = PlanningCheckContext(
            scenario=scenario,
            planner_ctx=planner_ctx,
            config=oracles,
            ego_p=ego_by_t[t_key].p,
            held_duration_ms=held_ms,
        )
        if planning_message_violates(plan, msg.t_pub, ctx):
            return msg
    raise NoViolatingPlanningMessage("no planning output violates the rules")


# ---------------------------------------------------------------------------
# earlier interval delta-debugging variant


def attribute_interval_dd(session: DtestSession, states: list[DynamicState],
                          component: ComponentId) -> tuple[int, int]:
    """Recursive interval partition over states; returns the minimal [a, b].

    Tests the leading and trailing step-sized intervals and their complements,
    recursing into whichever substitution eliminates the violation and halving
    the step when none does.
    """
    def passes(a: int, b: int) -> bool:
        return session.passed(SubstitutionPlan({component: IdealWithinStates(a, b)}))

    def attribute(start: int, end: int, step: int) -> tuple[int, int]:
        if step == 0:
            return start, end
        if passes(start, start + step - 1):
            return attribute(start, start + step - 1, step // 2)
        if passes(end - step + 1, end):
            return attribute(end - step + 1, end, step // 2)
        if passes(start + step, end):
            return attribute(start + step, end, (end - start - step) // 2)
        if passes(start, end - step):
            return attribute(start, end - step, (end - start - step) // 2)
        return attribute(start, end, step // 2)

    n = len(states)
    return attribute(1, n, n // 2)


# ---------------------------------------------------------------------------
# spectrum scoring (case-study helper)


class DegenerateInput(Exception):
    """Both coverage totals are zero."""


def tarantula_scores(coverage_passed: dict[str, int], coverage_failed: dict[str, int],
                     total_passed: int, total_failed: int
                     ) -> list[tuple[str, float]]:
    """Rank blocks by correlation with failing executions, most suspicious first."""
    if total_passed == 0 and total_failed == 0:
        raise DegenerateInput("no coverage at all")
    blocks = sorted(set(coverage_passed) | set(coverage_failed))
    scored = []
    for b in blocks:
        fr = (coverage_failed.get(b, 0) / total_failed) if total_failed else 0.0
        pr = (coverage_passed.get(b, 0) / total_passed) if total_passed else 0.0
        denom = fr + pr
        s = fr / denom if denom > 0 else 0.0
        scored.append((b, s))
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored


# ---------------------------------------------------------------------------
# report assembly


@dataclass
class AttributionReport:
    component_vi: str
    focus_component: str
    focus_seq: int
    focus_t: int
    focus_state_index: int | None
    message_total: int
    reduction_rate: float
    state_count: int
    dtest_component_level: int
    dtest_message_level: int
    simulations_total: int  # original run plus every dtest re-run
    wall_time_s: float
    strategy: str
    probe_outcomes: dict[str, bool] = field(default_factory=dict)
    monotonicity_audit: bool | None = None
    interval: tuple[int, int] | None = None
    focus_fault_affected: bool | None = None
    focus_affected_gap_ms: int | None = None  # 0 when the focus itself is affected
    notes: list[str] = field(default_factory=list)
    verdict_matrix: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["interval"] = list(self.interval) if self.interval else None
        return out


def build_verdict_matrix(trace: Trace, component: ComponentId,
                         focus: Message) -> list[dict]:
    """Exactly one cross at the focus message; later messages of the same
    component are unresolved; everything else counts as passing."""
    rows = []
    from .middleware import TICK_PRIORITY
    for comp in TICK_PRIORITY:
        for m in trace.rows[comp]:
            if comp is component and m.seq == focus.seq:
                label = "x"
            elif comp is component and m.seq > focus.seq:
                label = "?"
            else:
                label = "ok"
            rows.append({"component": comp.value, "seq": m.seq, "t_pub": m.t_pub,
                         "label": label})
    return rows


def verdict_matrix_csv(rows: list[dict]) -> str:
    sym = {"ok": "pass", "x": "fail", "?": "unresolved"}
    lines = ["component,seq,t_pub,label"]
    for r in rows:
        lines.append(f"{r['component']},{r['seq']},{r['t_pub']},{sym[r['label']]}")
    return "\n".join(lines) + "\n"


def attribute(scenario: Scenario, ads: AdsConfig, oracles: OracleConfig,
              strategy: str = "binary", audit_monotonicity: bool = False,
              probe_all: bool = False,
              units: QuantizationUnits | None = None) -> AttributionReport:
    """Full pipeline: run, attribute the component, then the focus message."""
    t_start = time.perf_counter()
    units = units or ads.units
    original = rtest(scenario, ads, oracles)
    session = DtestSession(scenario, ads, oracles)
    component, outcomes, comp_calls = attribute_component(session, original,
                                                          probe_all=probe_all)
    states = split_trace(original.trace, units)
    notes: list[str] = []
    audit_result: bool | None = None
    interval: tuple[int, int] | None = None

    if component is ComponentId.PLANNING:
        focus = attribute_message_planning(original.trace, scenario, ads, oracles)
        msg_calls = 0
        notes.append("planning short-circuit: message scan used no re-runs")
        notes.extend(_tarantula_note(original.trace, focus))
    elif strategy == "interval-dd":
        interval = attribute_interval_dd(session, states, component)
        msg_calls = session.calls - comp_calls
        focus = _focus_in_state(original.trace, component, interval[1])
    else:
        if audit_monotonicity:
            monotone, boundary, scan = audit_suffix_monotonicity(
                session, original.trace, states, component)
            audit_result = monotone
            if not monotone:
                raise MonotonicityViolation(scan)
            notes.append(f"audit: suffix predicate monotone, boundary state {boundary}")
        calls_before = session.calls
        focus, msg_calls = attribute_message_nonplanning(session, original.trace,
                                                         states, component)
        msg_calls = session.calls - calls_before

    total = original.trace.message_count()
    affected_ts = [m.t_pub for m in original.trace.rows[component] if m.fault_affected]
    if focus.fault_affected:
        gap = 0
    elif affected_ts:
        gap = min(abs(focus.t_pub - t) for t in affected_ts)
    else:
        gap = None
    report = AttributionReport(
        component_vi=component.value,
        focus_component=focus.component.value,
        focus_seq=focus.seq,
        focus_t=focus.t_pub,
        focus_state_index=focus.state_index,
        message_total=total,
        reduction_rate=1.0 - 1.0 / total,
        state_count=len(states),
        dtest_component_level=comp_calls,
        dtest_message_level=msg_calls,
        simulations_total=1 + session.calls,
        wall_time_s=time.perf_counter() - t_start,
        strategy=strategy,
        probe_outcomes=outcomes,
        monotonicity_audit=audit_result,
        interval=interval,
        focus_fault_affected=focus.fault_affected,
        focus_affected_gap_ms=gap,
        notes=notes,
        verdict_matrix=build_verdict_matrix(original.trace, component, focus),
    )
    return report


def _tarantula_note(trace: Trace, focus: Message) -> list[str]:
    """Spectrum comparison of the failing plan against the last clean one."""
    row = trace.rows[ComponentId.PLANNING]
    passed_msg = None
    for m in row:
        if m.seq >= focus.seq:
            break
        passed_msg = m
    if passed_msg is None:
        return []
    failed_tags = {t: 1 for t in focus.payload.branch_tags}
    passed_tags = {t: 1 for t in passed_msg.payload.branch_tags}
    ranked = tarantula_scores(passed_tags, failed_tags, 1, 1)
    top = [f"{b}={s:.2f}" for b, s in ranked[:3]]
    return [f"tarantula over planner branch tags: {', '.join(top)}"]
