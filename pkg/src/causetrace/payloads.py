"""Typed message payloads exchanged between pipeline components."""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import OrientedBox, Vec2
from .scenario import SimTime


@dataclass(frozen=True)
class PerceivedObject:
    id: str
    kind: str
    box: OrientedBox
    v: Vec2

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "center": list(self.box.center),
            "half_extents": list(self.box.half_extents),
            "heading": self.box.heading,
            "v": list(self.v),
        }


@dataclass(frozen=True)
class PerceptionOut:
    objects: tuple[PerceivedObject, ...]

    def to_dict(self) -> dict:
        return {"objects": [o.to_dict() for o in self.objects]}


@dataclass(frozen=True)
class PredictedTrajectory:
    id: str
    kind: str
    half_extents: tuple[float, float]
    heading: float  # heading at the first point
    points: tuple[tuple[SimTime, float, float], ...]  # (t_ms, x, y), strictly increasing t

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "half_extents": list(self.half_extents),
            "heading": self.heading,
            "points": [[t, x, y] for t, x, y in self.points],
        }

    def box_at(self, t: SimTime) -> OrientedBox:
        pts = self.points
        if t <= pts[0][0]:
            x, y = pts[0][1], pts[0][2]
            return OrientedBox((x, y), self.half_extents, self.heading)
        if t >= pts[-1][0]:
            x, y = pts[-1][1], pts[-1][2]
            return OrientedBox((x, y), self.half_extents, self._heading_at(len(pts) - 1))
        lo, hi = 0, len(pts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pts[mid][0] <= t:
                lo = mid
            else:
                hi = mid
        t0, x0, y0 = pts[lo]
        t1, x1, y1 = pts[hi]
        u = (t - t0) / (t1 - t0)
        return OrientedBox((x0 + (x1 - x0) * u, y0 + (y1 - y0) * u),
                           self.half_extents, self._heading_at(lo))

    def _heading_at(self, i: int) -> float:
        import math
        pts = self.points
        j = min(i + 1, len(pts) - 1)
        k = max(0, j - 1)
        dx, dy = pts[j][1] - pts[k][1], pts[j][2] - pts[k][2]
        if dx == 0.0 and dy == 0.0:
            return self.heading
        return math.atan2(dy, dx)


@dataclass(frozen=True)
class PredictionOut:
    trajectories: tuple[PredictedTrajectory, ...]

    def to_dict(self) -> dict:
        return {"trajectories": [tr.to_dict() for tr in self.trajectories]}

    def by_id(self, obj_id: str) -> PredictedTrajectory | None:
        for tr in self.trajectories:
            if tr.id == obj_id:
                return tr
        return None


@dataclass(frozen=True)
class TrajPoint:
    t: SimTime
    p: Vec2
    speed: float
    heading: float

    def to_dict(self) -> dict:
        return {"t": self.t, "p": list(self.p), "speed": self.speed, "heading": self.heading}


@dataclass(frozen=True)
class PlanningOut:
    trajectory: tuple[TrajPoint, ...]
    decision: str  # Cruise | Stop | Nudge | Emergency
    branch_tags: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "trajectory": [pt.to_dict() for pt in self.trajectory],
            "decision": self.decision,
            "branch_tags": list(self.branch_tags),
        }


@dataclass(frozen=True)
class ControlOut:
    accel_cmd: float
    steer: float

    def to_dict(self) -> dict:
        return {"accel_cmd": self.accel_cmd, "steer": self.steer}


@dataclass(frozen=True)
class LocalizationOut:
    p: Vec2
    heading: float
    speed: float

    def to_dict(self) -> dict:
        return {"p": list(self.p), "heading": self.heading, "speed": self.speed}
