"""Scenario data model: map, traffic objects, signals, loading and geometry queries.

Scenario files are JSON (see `load_scenario`); distances are meters, speeds m/s,
times integer milliseconds. Loaded scenarios are immutable and safe to share
across parallel re-runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import OrientedBox, Vec2, is_finite_vec, vec_dist, vec_lerp

SimTime = int  # integer milliseconds

KINDS = ("Pedestrian", "Vehicle", "StaticObstacle", "Infrastructure")
SIGNAL_COLORS = ("Red", "Yellow", "Green")


class ParseError(Exception):
    """Scenario file is not valid JSON or misses required structure."""


class ValidationError(Exception):
    """A scenario invariant is violated; message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Waypoint:
    p: Vec2
    v: Vec2
    a: Vec2
    t: SimTime


@dataclass(frozen=True)
class TrafficObject:
    id: str
    kind: str
    size: tuple[float, float, float]  # length, width, height
    waypoints: tuple[Waypoint, ...]
    heading_override: float | None = None

    @property
    def is_static(self) -> bool:
        return all(w.v == (0.0, 0.0) and w.a == (0.0, 0.0) for w in self.waypoints)


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: tuple[Vec2, ...]
    width: float
    speed_limit: float


@dataclass(frozen=True)
class LaneMap:
    lanes: tuple[Lane, ...]
    successors: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def lane_by_id(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)


@dataclass(frozen=True)
class SignalPhase:
    t_start: SimTime
    t_end: SimTime  # half-open interval [t_start, t_end)
    color: str


@dataclass(frozen=True)
class TrafficSignal:
    id: str
    stop_line: Vec2
    phases: tuple[SignalPhase, ...]

    def color_at(self, t: SimTime) -> str:
        for ph in self.phases:
            if ph.t_start <= t < ph.t_end:
                return ph.color
        return self.phases[-1].color


@dataclass(frozen=True)
class Scenario:
    map: LaneMap
    a_init: tuple[Vec2, float]  # position + heading
    a_dest: Vec2
    objects: tuple[TrafficObject, ...]
    signals: tuple[TrafficSignal, ...]
    t_max: SimTime
    seed: int
    ego_size: tuple[float, float, float]

    def object_by_id(self, obj_id: str) -> TrafficObject:
        for obj in self.objects:
            if obj.id == obj_id:
                return obj
        raise KeyError(obj_id)


# ---------------------------------------------------------------------------
# geometry queries


def object_pose_at(obj: TrafficObject, t: SimTime) -> tuple[Vec2, Vec2, Vec2]:
    """Pose (p, v, a) at time t: linear interpolation, clamped outside the script."""
    wps = obj.waypoints
    if t <= wps[0].t:
        w = wps[0]
        return w.p, w.v, w.a
    if t >= wps[-1].t:
        w = wps[-1]
        return w.p, w.v, w.a
    lo, hi = 0, len(wps) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if wps[mid].t <= t:
            lo = mid
        else:
            hi = mid
    w0, w1 = wps[lo], wps[hi]
    u = (t - w0.t) / (w1.t - w0.t)
    return vec_lerp(w0.p, w1.p, u), vec_lerp(w0.v, w1.v, u), w0.a


def _heading_from_motion(obj: TrafficObject, t: SimTime, v: Vec2) -> float:
    if v != (0.0, 0.0):
        return math.atan2(v[1], v[0])
    if obj.heading_override is not None:
        return obj.heading_override
    # Zero instantaneous velocity: fall back to the previous moving segment.
    prev = None
    for w in obj.waypoints:
        if w.t > t:
            break
        if w.v != (0.0, 0.0):
            prev = w
    if prev is not None:
        return math.atan2(prev.v[1], prev.v[0])
    return 0.0


def bbox_at(obj: TrafficObject, t: SimTime) -> OrientedBox:
    p, v, _ = object_pose_at(obj, t)
    heading = _heading_from_motion(obj, t, v)
    length, width, _ = obj.size
    return OrientedBox(p, (length / 2.0, width / 2.0), heading)


def project_on_polyline(line: tuple[Vec2, ...], p: Vec2) -> tuple[float, float, float]:
    """Project p onto a polyline.

    Returns (arc length of the projection, signed lateral offset, heading of the
    segment hit). Lateral is positive to the left of travel direction.
    """
    best = None
    s_acc = 0.0
    for i in range(len(line) - 1):
        ax, ay = line[i]
        bx, by = line[i + 1]
        dx, dy = bx - ax, by - ay
        seg_len = math.hypot(dx, dy)
        if seg_len <= 0.0:
            continue
        ux, uy = dx / seg_len, dy / seg_len
        t = ((p[0] - ax) * ux + (p[1] - ay) * uy)
        t_cl = min(seg_len, max(0.0, t))
        qx, qy = ax + ux * t_cl, ay + uy * t_cl
        d = math.hypot(p[0] - qx, p[1] - qy)
        if best is None or d < best[0] - 1e-12:
            lateral = -(p[0] - qx) * uy + (p[1] - qy) * ux
            best = (d, s_acc + t_cl, lateral, math.atan2(uy, ux))
        s_acc += seg_len
    assert best is not None
    return best[1], best[2], best[3]


def point_on_polyline(line: tuple[Vec2, ...], s: float) -> tuple[Vec2, float]:
    """Point and heading at arc length s (clamped to the ends)."""
    if s <= 0.0:
        ax, ay = line[0]
        bx, by = line[1]
        return line[0], math.atan2(by - ay, bx - ax)
    s_acc = 0.0
    for i in range(len(line) - 1):
        ax, ay = line[i]
        bx, by = line[i + 1]
        seg_len = math.hypot(bx - ax, by - ay)
        if s_acc + seg_len >= s:
            u = (s - s_acc) / seg_len
            return vec_lerp(line[i], line[i + 1], u), math.atan2(by - ay, bx - ax)
        s_acc += seg_len
    ax, ay = line[-2]
    bx, by = line[-1]
    return line[-1], math.atan2(by - ay, bx - ax)


def polyline_length(line: tuple[Vec2, ...]) -> float:
    return sum(vec_dist(line[i], line[i + 1]) for i in range(len(line) - 1))


def lane_at(lane_map: LaneMap, p: Vec2) -> tuple[Lane, float, float] | None:
    """Nearest lane containing p within its width; ties go to the smaller lane id."""
    best: tuple[Lane, float, float] | None = None
    best_abs = math.inf
    for lane in sorted(lane_map.lanes, key=lambda ln: ln.id):
        s, lateral, _ = project_on_polyline(lane.centerline, p)
        if abs(lateral) <= lane.width / 2.0 + 1e-9:
            if abs(lateral) < best_abs - 1e-12:
                best = (lane, s, lateral)
                best_abs = abs(lateral)
    return best


# ---------------------------------------------------------------------------
# load / save / validate


def _vec(raw, path: str) -> Vec2:
    if not (isinstance(raw, list) and len(raw) == 2):
        raise ParseError(f"{path}: expected [x, y]")
    v = (float(raw[0]), float(raw[1]))
    if not is_finite_vec(v):
        raise ValidationError(path, "components must be finite")
    return v


def _parse_waypoint(raw: dict, path: str) -> Waypoint:
    try:
        t = int(raw["t_ms"])
        p = _vec(raw["p"], f"{path}.p")
        v = _vec(raw["v"], f"{path}.v")
        a = _vec(raw["a"], f"{path}.a")
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc}") from exc
    if t < 0:
        raise ValidationError(f"{path}.t_ms", "must be >= 0")
    return Waypoint(p, v, a, t)


def _parse_object(raw: dict, idx: int) -> TrafficObject:
    path = f"objects[{idx}]"
    try:
        obj_id = str(raw["id"])
        kind = raw["kind"]
        size = tuple(float(x) for x in raw["size"])
        wps_raw = raw["waypoints"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc}") from exc
    if kind not in KINDS:
        raise ValidationError(f"{path}.kind", f"unknown kind {kind!r}")
    if len(size) != 3 or any(x <= 0 for x in size):
        raise ValidationError(f"{path}.size", "size components must be > 0")
    if not wps_raw:
        raise ValidationError(f"{path}.waypoints", "must be non-empty")
    wps = tuple(_parse_waypoint(w, f"{path}.waypoints[{i}]") for i, w in enumerate(wps_raw))
    for i in range(1, len(wps)):
        if wps[i].t <= wps[i - 1].t:
            raise ValidationError(f"{path}.waypoints[{i}].t_ms", "must be strictly increasing")
    obj = TrafficObject(
        id=obj_id,
        kind=kind,
        size=(size[0], size[1], size[2]),
        waypoints=wps,
        heading_override=float(raw["heading_override"]) if "heading_override" in raw else None,
    )
    if kind in ("StaticObstacle", "Infrastructure"):
        first = wps[0]
        for i, w in enumerate(wps):
            if w.p != first.p or w.v != (0.0, 0.0) or w.a != (0.0, 0.0):
                raise ValidationError(
                    f"{path}.waypoints[{i}]", "static object requires constant p and zero v, a"
                )
    return obj


def _parse_lane(raw: dict, idx: int) -> Lane:
    path = f"map.lanes[{idx}]"
    try:
        lane_id = str(raw["id"])
        pts = tuple(_vec(p, f"{path}.centerline[{i}]") for i, p in enumerate(raw["centerline"]))
        width = float(raw["width"])
        speed_limit = float(raw["speed_limit"])
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc}") from exc
    if len(pts) < 2:
        raise ValidationError(f"{path}.centerline", "needs at least 2 points")
    if width <= 0:
        raise ValidationError(f"{path}.width", "must be > 0")
    if speed_limit <= 0:
        raise ValidationError(f"{path}.speed_limit", "must be > 0")
    return Lane(lane_id, pts, width, speed_limit)


def _parse_signal(raw: dict, idx: int, t_max: SimTime) -> TrafficSignal:
    path = f"signals[{idx}]"
    try:
        sig_id = str(raw["id"])
        stop_line = _vec(raw["stop_line"], f"{path}.stop_line")
        phases_raw = raw["phases"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing key {exc}") from exc
    phases = []
    for i, ph in enumerate(phases_raw):
        color = ph.get("color")
        if color not in SIGNAL_COLORS:
            raise ValidationError(f"{path}.phases[{i}].color", f"unknown color {color!r}")
        phases.append(SignalPhase(int(ph["t_start_ms"]), int(ph["t_end_ms"]), color))
    phases.sort(key=lambda p: p.t_start)
    cursor = 0
    for i, ph in enumerate(phases):
        if ph.t_start != cursor:
            raise ValidationError(f"{path}.phases[{i}]", "phases must be contiguous from 0")
        if ph.t_end <= ph.t_start:
            raise ValidationError(f"{path}.phases[{i}]", "empty phase interval")
        cursor = ph.t_end
    if cursor < t_max:
        raise ValidationError(f"{path}.phases", f"phases must cover [0, {t_max})")
    return TrafficSignal(sig_id, stop_line, tuple(phases))


def _reachable_lanes(lane_map: LaneMap, start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for nxt in lane_map.successors.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")
    try:
        map_raw = doc["map"]
        ego = doc["ego"]
        t_max = int(doc["t_max_ms"])
        seed = int(doc["seed"])
    except KeyError as exc:
        raise ParseError(f"top level: missing key {exc}") from exc

    lanes = tuple(_parse_lane(ln, i) for i, ln in enumerate(map_raw.get("lanes", [])))
    lane_ids = {ln.id for ln in lanes}
    successors = {}
    for lane_id, succ in map_raw.get("successors", {}).items():
        if lane_id not in lane_ids:
            raise ValidationError(f"map.successors.{lane_id}", "unknown lane")
        for s in succ:
            if s not in lane_ids:
                raise ValidationError(f"map.successors.{lane_id}", f"unknown successor {s!r}")
        successors[str(lane_id)] = tuple(str(s) for s in succ)
    lane_map = LaneMap(lanes, successors)

    try:
        init_pose_raw = ego["init_pose"]
        a_init = (_vec(init_pose_raw[:2], "ego.init_pose"), float(init_pose_raw[2]))
        a_dest = _vec(ego["dest"], "ego.dest")
        ego_size = tuple(float(x) for x in ego["size"])
    except KeyError as exc:
        raise ParseError(f"ego: missing key {exc}") from exc
    if len(ego_size) != 3 or any(x <= 0 for x in ego_size):
        raise ValidationError("ego.size", "size components must be > 0")

    if t_max <= 0:
        raise ValidationError("t_max_ms", "must be > 0")
    if seed < 0 or seed >= 2**64:
        raise ValidationError("seed", "must fit in 64 unsigned bits")

    objects = tuple(_parse_object(o, i) for i, o in enumerate(doc.get("objects", [])))
    ids = [o.id for o in objects]
    if len(ids) != len(set(ids)):
        raise ValidationError("objects", "object ids must be unique")

    signals = tuple(_parse_signal(s, i, t_max) for i, s in enumerate(doc.get("signals", [])))

    init_hit = lane_at(lane_map, a_init[0])
    if init_hit is None:
        raise ValidationError("ego.init_pose", "must lie on some lane")
    dest_hit = lane_at(lane_map, a_dest)
    if dest_hit is None:
        raise ValidationError("ego.dest", "must lie on some lane")
    if dest_hit[0].id not in _reachable_lanes(lane_map, init_hit[0].id):
        raise ValidationError("ego.dest", "destination lane unreachable from initial lane")

    return Scenario(
        map=lane_map,
        a_init=a_init,
        a_dest=a_dest,
        objects=objects,
        signals=signals,
        t_max=t_max,
        seed=seed,
        ego_size=(ego_size[0], ego_size[1], ego_size[2]),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "map": {
            "lanes": [
                {
                    "id": ln.id,
                    "centerline": [list(p) for p in ln.centerline],
                    "width": ln.width,
                    "speed_limit": ln.speed_limit,
                }
                for ln in sc.map.lanes
            ],
            "successors": {k: list(v) for k, v in sorted(sc.map.successors.items())},
        },
        "ego": {
            "init_pose": [sc.a_init[0][0], sc.a_init[0][1], sc.a_init[1]],
            "dest": list(sc.a_dest),
            "size": list(sc.ego_size),
        },
        "objects": [
            {
                "id": o.id,
                "kind": o.kind,
                "size": list(o.size),
                "waypoints": [
                    {"t_ms": w.t, "p": list(w.p), "v": list(w.v), "a": list(w.a)}
                    for w in o.waypoints
                ],
                **({"heading_override": o.heading_override} if o.heading_override is not None else {}),
            }
            for o in sc.objects
        ],
        "signals": [
            {
                "id": s.id,
                "stop_line": list(s.stop_line),
                "phases": [
                    {"t_start_ms": p.t_start, "t_end_ms": p.t_end, "color": p.color}
                    for p in s.phases
                ],
            }
            for s in sc.signals
        ],
        "t_max_ms": sc.t_max,
        "seed": sc.seed,
    }


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n", encoding="utf-8")
