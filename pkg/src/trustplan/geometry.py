"""Planar geometry helpers: angle wrapping and oriented-box distances."""

from __future__ import annotations

import math
from typing import NamedTuple

from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _wrap(theta):
    r = theta - TWO_PI * math.floor((theta + math.pi) / TWO_PI)
    # rounding can land exactly on +pi for inputs just below -pi
    if r >= math.pi:
        r -= TWO_PI
    elif r < -math.pi:
        r += TWO_PI
    return r


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval [-pi, pi)."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta!r}")
    return float(_wrap(float(theta)))


class Box(NamedTuple):
    """Oriented rectangle given by its center, heading and extents."""

    x: float
    y: float
    yaw: float
    width: float
    length: float


@njit(cache=True)
def _point_rect_distance(px, py, cx, cy, c, s, hl, hw):
    dx = px - cx
    dy = py - cy
    lx = abs(c * dx + s * dy) - hl
    ly = abs(-s * dx + c * dy) - hw
    if lx < 0.0:
        lx = 0.0
    if ly < 0.0:
        ly = 0.0
    return math.sqrt(lx * lx + ly * ly)


@njit(cache=True)
def _separated(dx, dy, ux, uy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
    # projection radii of both boxes on axis u
    r1 = hl1 * abs(ux * c1 + uy * s1) + hw1 * abs(-ux * s1 + uy * c1)
    r2 = hl2 * abs(ux * c2 + uy * s2) + hw2 * abs(-ux * s2 + uy * c2)
    return abs(dx * ux + dy * uy) > r1 + r2


@njit(cache=True)
def _box_distance(x1, y1, c1, s1, hl1, hw1, x2, y2, c2, s2, hl2, hw2):
    """Exact distance between two oriented rectangles (0 when they touch).

    ``c``/``s`` are cos/sin of the heading, ``hl``/``hw`` half length/width.
    """
    dx = x2 - x1
    dy = y2 - y1
    rad1 = math.sqrt(hl1 * hl1 + hw1 * hw1)
    rad2 = math.sqrt(hl2 * hl2 + hw2 * hw2)
    far = dx * dx + dy * dy > (rad1 + rad2) * (rad1 + rad2)
    if not far:
        if not (
            _separated(dx, dy, c1, s1, c1, s1, hl1, hw1, c2, s2, hl2, hw2)
            or _separated(dx, dy, -s1, c1, c1, s1, hl1, hw1, c2, s2, hl2, hw2)
            or _separated(dx, dy, c2, s2, c1, s1, hl1, hw1, c2, s2, hl2, hw2)
            or _separated(dx, dy, -s2, c2, c1, s1, hl1, hw1, c2, s2, hl2, hw2)
        ):
            return 0.0
    # disjoint convex polygons: the minimum is attained at a vertex of one box
    best = math.inf
    for i in range(4):
        a = hl1 if i < 2 else -hl1
        b = hw1 if i % 2 == 0 else -hw1
        px = x1 + a * c1 - b * s1
        py = y1 + a * s1 + b * c1
        d = _point_rect_distance(px, py, x2, y2, c2, s2, hl2, hw2)
        if d < best:
            best = d
        a = hl2 if i < 2 else -hl2
        b = hw2 if i % 2 == 0 else -hw2
        px = x2 + a * c2 - b * s2
        py = y2 + a * s2 + b * c2
        d = _point_rect_distance(px, py, x1, y1, c1, s1, hl1, hw1)
        if d < best:
            best = d
    return best


def box_distance(a: Box, b: Box) -> float:
    """Minimum Euclidean distance between the point sets of two boxes."""
    return float(
        _box_distance(
            a.x, a.y, math.cos(a.yaw), math.sin(a.yaw), 0.5 * a.length, 0.5 * a.width,
            b.x, b.y, math.cos(b.yaw), math.sin(b.yaw), 0.5 * b.length, 0.5 * b.width,
        )
    )


def box_corners(box: Box) -> list[tuple[float, float]]:
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    return [
        (box.x + a * c - b * s, box.y + a * s + b * c)
        for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    ]
