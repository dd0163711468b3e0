"""Planar geometry primitives: 2-vectors, oriented boxes, exact box distance.

Everything works on plain float tuples to keep the simulator hot loops cheap.
An oriented box is (center, half_extents, heading); `min_obb_distance` is exact
(segment-to-segment over the 4x4 edge pairs plus containment), returning 0.0
for overlapping boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec2 = tuple[float, float]


def vec_add(a: Vec2, b: Vec2) -> Vec2:
    return (a[0] + b[0], a[1] + b[1])


def vec_sub(a: Vec2, b: Vec2) -> Vec2:
    return (a[0] - b[0], a[1] - b[1])


def vec_scale(a: Vec2, k: float) -> Vec2:
    return (a[0] * k, a[1] * k)


def vec_dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def vec_norm(a: Vec2) -> float:
    return math.hypot(a[0], a[1])


def vec_dist(a: Vec2, b: Vec2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def vec_lerp(a: Vec2, b: Vec2, u: float) -> Vec2:
    return (a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u)


def is_finite_vec(a: Vec2) -> bool:
    return math.isfinite(a[0]) and math.isfinite(a[1])


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle given by center, half extents (long, lat) and heading (rad)."""

    center: Vec2
    half_extents: tuple[float, float]
    heading: float

    def corners(self) -> list[Vec2]:
        cx, cy = self.center
        hl, hw = self.half_extents
        c, s = math.cos(self.heading), math.sin(self.heading)
        out = []
        for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
            out.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
        return out

    def circumradius(self) -> float:
        hl, hw = self.half_extents
        return math.hypot(hl, hw)

    def contains(self, p: Vec2) -> bool:
        # Test in box frame; boundary counts as inside.
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        c, s = math.cos(self.heading), math.sin(self.heading)
        lx = dx * c + dy * s
        ly = -dx * s + dy * c
        hl, hw = self.half_extents
        return abs(lx) <= hl and abs(ly) <= hw


def _seg_seg_distance(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> float:
    """Minimum distance between two segments."""
    d1 = vec_sub(p2, p1)
    d2 = vec_sub(q2, q1)
    r = vec_sub(p1, q1)
    a = vec_dot(d1, d1)
    e = vec_dot(d2, d2)
    f = vec_dot(d2, r)
    if a <= 1e-18 and e <= 1e-18:
        return vec_norm(r)
    if a <= 1e-18:
        t = min(1.0, max(0.0, f / e))
        return vec_dist(p1, vec_add(q1, vec_scale(d2, t)))
    c = vec_dot(d1, r)
    if e <= 1e-18:
        s = min(1.0, max(0.0, -c / a))
        return vec_dist(vec_add(p1, vec_scale(d1, s)), q1)
    b = vec_dot(d1, d2)
    denom = a * e - b * b
    if denom > 1e-18:
        s = min(1.0, max(0.0, (b * f - c * e) / denom))
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(1.0, max(0.0, -c / a))
    elif t > 1.0:
        t = 1.0
        s = min(1.0, max(0.0, (b - c) / a))
    return vec_dist(vec_add(p1, vec_scale(d1, s)), vec_add(q1, vec_scale(d2, t)))


def _boxes_overlap(a: OrientedBox, b: OrientedBox, ca: list[Vec2], cb: list[Vec2]) -> bool:
    """Separating-axis test over the 4 face normals."""
    for heading in (a.heading, a.heading + math.pi / 2, b.heading, b.heading + math.pi / 2):
        ax, ay = math.cos(heading), math.sin(heading)
        amin = amax = ca[0][0] * ax + ca[0][1] * ay
        for px, py in ca[1:]:
            d = px * ax + py * ay
            if d < amin:
                amin = d
            elif d > amax:
                amax = d
        bmin = bmax = cb[0][0] * ax + cb[0][1] * ay
        for px, py in cb[1:]:
            d = px * ax + py * ay
            if d < bmin:
                bmin = d
            elif d > bmax:
                bmax = d
        if amax < bmin or bmax < amin:
            return False
    return True


def min_obb_distance(a: OrientedBox, b: OrientedBox) -> float:
    """Exact minimum distance between two oriented boxes; 0.0 when overlapping."""
    ca = a.corners()
    cb = b.corners()
    if _boxes_overlap(a, b, ca, cb):
        return 0.0
    best = math.inf
    for i in range(4):
        p1, p2 = ca[i], ca[(i + 1) % 4]
        for j in range(4):
            d = _seg_seg_distance(p1, p2, cb[j], cb[(j + 1) % 4])
            if d < best:
                best = d
    return best


def obb_separation_at_least(a: OrientedBox, b: OrientedBox, threshold: float) -> bool:
    """True if the boxes are provably at least `threshold` apart.

    The gap between the boxes' projections on any face normal is a lower bound
    on their Euclidean distance, so one wide axis is enough to skip the exact
    (much more expensive) computation. False means "maybe closer": callers fall
    back to min_obb_distance.
    """
    ca = a.corners()
    cb = b.corners()
    for heading in (a.heading, a.heading + math.pi / 2, b.heading, b.heading + math.pi / 2):
        ax, ay = math.cos(heading), math.sin(heading)
        amin = amax = ca[0][0] * ax + ca[0][1] * ay
        for px, py in ca[1:]:
            d = px * ax + py * ay
            if d < amin:
                amin = d
            elif d > amax:
                amax = d
        bmin = bmax = cb[0][0] * ax + cb[0][1] * ay
        for px, py in cb[1:]:
            d = px * ax + py * ay
            if d < bmin:
                bmin = d
            elif d > bmax:
                bmax = d
        if bmin - amax >= threshold or amin - bmax >= threshold:
            return True
    return False


def obb_distance_upper_bound(a: OrientedBox, b: OrientedBox) -> float:
    """Cheap center-distance bound used to skip exact tests in hot loops."""
    return vec_dist(a.center, b.center) - a.circumradius() - b.circumradius()


def point_to_obb_distance(p: Vec2, box: OrientedBox) -> float:
    """Exact distance from a point to an oriented box; 0.0 inside."""
    dx, dy = p[0] - box.center[0], p[1] - box.center[1]
    c, s = math.cos(box.heading), math.sin(box.heading)
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    hl, hw = box.half_extents
    ox = max(0.0, abs(lx) - hl)
    oy = max(0.0, abs(ly) - hw)
    return math.hypot(ox, oy)
