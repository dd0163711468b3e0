"""In-process publish/subscribe bus with complete, deterministic trace recording.

A run owns one `Bus`. Components publish typed payloads; every message lands in
the per-component trace row with a dense seq starting at 1. Serialization is
canonical JSON-lines (fixed key order, shortest round-trip floats) so that two
runs of the same configuration produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .scenario import SimTime, Waypoint


class ComponentId(str, Enum):
    PERCEPTION = "perception"
    PREDICTION = "prediction"
    PLANNING = "planning"
    CONTROL = "control"
    LOCALIZATION = "localization"


COMPONENTS = (
    ComponentId.PERCEPTION,
    ComponentId.PREDICTION,
    ComponentId.PLANNING,
    ComponentId.CONTROL,
    ComponentId.LOCALIZATION,
)

# Firing order inside one tick: sensing before planning before control.
TICK_PRIORITY = (
    ComponentId.LOCALIZATION,
    ComponentId.PERCEPTION,
    ComponentId.PREDICTION,
    ComponentId.PLANNING,
    ComponentId.CONTROL,
)


class OrderError(Exception):
    """Publish time regressed for a component."""


@dataclass
class Message:
    component: ComponentId
    seq: int
    t_pub: SimTime
    payload: Any
    state_key: tuple[int, ...] | None = None
    state_index: int | None = None
    fault_affected: bool = False


@dataclass
class ExecutionRecord:
    component: ComponentId
    input_snapshot: dict[str, int]  # topic -> seq consumed
    output_seq: int
    t: SimTime


@dataclass
class Verdict:
    passed: bool
    violations: list[dict] = field(default_factory=list)


@dataclass
class Trace:
    rows: dict[ComponentId, list[Message]]
    records: list[ExecutionRecord]
    ego_log: list[Waypoint]  # sampled at a fixed period
    verdict: Verdict | None = None
    diagnostics: list[str] = field(default_factory=list)

    def message_count(self) -> int:
        return sum(len(r) for r in self.rows.values())

    def row(self, component: ComponentId) -> list[Message]:
        return self.rows[component]


class Bus:
    """Single-run message bus; strictly single-threaded."""

    def __init__(self) -> None:
        self.trace = Trace(rows={c: [] for c in COMPONENTS}, records=[], ego_log=[])
        self._latest: dict[ComponentId, Message] = {}

    def publish(self, component: ComponentId, payload: Any, t: SimTime,
                fault_affected: bool = False) -> Message:
        row = self.trace.rows[component]
        if row and t < row[-1].t_pub:
            raise OrderError(f"{component.value}: publish at t={t} before t={row[-1].t_pub}")
        msg = Message(component=component, seq=len(row) + 1, t_pub=t, payload=payload,
                      fault_affected=fault_affected)
        row.append(msg)
        self._latest[component] = msg
        return msg

    def latest(self, component: ComponentId) -> Message | None:
        return self._latest.get(component)

    def record_execution(self, component: ComponentId, inputs: dict[str, int],
                         output: Message) -> None:
        self.trace.records.append(
            ExecutionRecord(component, inputs, output.seq, output.t_pub)
        )


def trace_suffix(trace: Trace, component: ComponentId, i: int) -> list[Message]:
    """Messages of `component` with seq >= i; i may be row length + 1 (empty)."""
    row = trace.rows[component]
    if i < 1 or i > len(row) + 1:
        raise IndexError(f"suffix start {i} outside 1..{len(row) + 1}")
    return row[i - 1:]


# ---------------------------------------------------------------------------
# canonical serialization


def _canon(obj: Any) -> Any:
    """Payloads expose to_dict(); containers are converted recursively."""
    if hasattr(obj, "to_dict"):
        return _canon(obj.to_dict())
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    return obj


def _dumps(obj: Any) -> str:
    return json.dumps(_canon(obj), separators=(",", ":"), allow_nan=False)


def serialize_trace(trace: Trace) -> str:
    """One record per line; message lines keep a fixed key order."""
    lines = []
    lines.append(_dumps({"kind": "header", "messages": trace.message_count(),
                         "ego_samples": len(trace.ego_log)}))
    for component in TICK_PRIORITY:
        for m in trace.rows[component]:
            lines.append(_dumps({
                "kind": "msg",
                "component": component.value,
                "seq": m.seq,
                "t_pub": m.t_pub,
                "payload": m.payload,
                "state_key": list(m.state_key) if m.state_key is not None else None,
                "state_index": m.state_index,
                "fault_affected": m.fault_affected,
            }))
    for r in trace.records:
        lines.append(_dumps({
            "kind": "exec",
            "component": r.component.value,
            "inputs": dict(sorted(r.input_snapshot.items())),
            "output_seq": r.output_seq,
            "t": r.t,
        }))
    for w in trace.ego_log:
        lines.append(_dumps({"kind": "ego", "t": w.t, "p": list(w.p), "v": list(w.v),
                             "a": list(w.a)}))
    if trace.verdict is not None:
        lines.append(_dumps({"kind": "verdict", "passed": trace.verdict.passed,
                             "violations": trace.verdict.violations}))
    for d in trace.diagnostics:
        lines.append(_dumps({"kind": "diag", "text": d}))
    return "\n".join(lines) + "\n"


def trace_digest(trace: Trace) -> str:
    return hashlib.sha256(serialize_trace(trace).encode("utf-8")).hexdigest()


def save_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(serialize_trace(trace), encoding="utf-8")


def load_trace_records(path: str | Path) -> list[dict]:
    """Raw record stream of a serialized trace (for replay tooling)."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out
