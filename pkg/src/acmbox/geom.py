"""Rotated boxes, object poses and the object-to-box angle map.

Angles are radians, measured counter-clockwise from the +x axis to the
box's ``w`` side. A canonical box has ``w >= h`` and ``theta`` in [0, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateQuad

PI = math.pi
HALF_PI = math.pi / 2
TWO_PI = 2 * math.pi


def _check_finite(**fields):
    for name, v in fields.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class RotatedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        _check_finite(cx=self.cx, cy=self.cy, w=self.w, h=self.h, theta=self.theta)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple:
        return (self.cx, self.cy, self.w, self.h, self.theta)

    def canonical(self) -> "RotatedBox":
        return canonicalize(self)


@dataclass(frozen=True)
class ObjectPose:
    """An object instance; unlike its box, orientation has period 2*pi."""

    cx: float
    cy: float
    w: float
    h: float
    phi: float

    def __post_init__(self):
        _check_finite(cx=self.cx, cy=self.cy, w=self.w, h=self.h, phi=self.phi)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"object sides must be positive, got w={self.w}, h={self.h}")
        object.__setattr__(self, "phi", _reduce(self.phi, TWO_PI))


def _reduce(angle, period):
    r = math.fmod(angle, period)
    if r < 0:
        r += period
    # fmod of a tiny negative number can round up to exactly `period`
    if r >= period:
        r = 0.0
    return r


def canonicalize(b: RotatedBox) -> RotatedBox:
    """Long-side form: ``w >= h``, ``theta`` in [0, pi). Ties keep side order."""
    w, h, theta = b.w, b.h, b.theta
    if w < h:
        w, h, theta = h, w, theta + HALF_PI
    return RotatedBox(b.cx, b.cy, w, h, _reduce(theta, PI))


def box_of_object(o: ObjectPose, symmetry_period: float = PI) -> RotatedBox:
    """Map an object pose to its (canonical) bounding box.

    Position and scale are copied; the angle is wrapped by the box's
    symmetry period (pi for rectangles, pi/2 for square-like boxes).
    """
    if not (math.isclose(symmetry_period, PI) or math.isclose(symmetry_period, HALF_PI)):
        raise ValueError("symmetry_period must be pi or pi/2")
    theta = _reduce(o.phi, symmetry_period)
    return canonicalize(RotatedBox(o.cx, o.cy, o.w, o.h, theta))


def corners(b: RotatedBox) -> np.ndarray:
    """Four vertices as a (4, 2) array in counter-clockwise order."""
    c, s = math.cos(b.theta), math.sin(b.theta)
    hw, hh = b.w / 2, b.h / 2
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([b.cx, b.cy])


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices CCW without repeats."""
    pts = sorted({(float(x), float(y)) for x, y in np.asarray(points, dtype=float)})
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for CCW)."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def min_area_rect(quad) -> RotatedBox:
    """Minimum-area enclosing rotated rectangle of a point set (rotating calipers).

    Some optimal rectangle has a side flush with a hull edge, so only the
    hull edge directions are tried.
    """
    hull = convex_hull(quad)
    if len(hull) < 3 or polygon_area(hull) < 1e-12:
        raise DegenerateQuad(f"hull area below 1e-12 for points {np.asarray(quad).tolist()}")

    best = None
    for i in range(len(hull)):
        edge = hull[(i + 1) % len(hull)] - hull[i]
        u = edge / np.hypot(*edge)
        v = np.array([-u[1], u[0]])
        pu, pv = hull @ u, hull @ v
        lu, hu, lv, hv = pu.min(), pu.max(), pv.min(), pv.max()
        area = (hu - lu) * (hv - lv)
        if best is None or area < best[0] - 1e-15:
            best = (area, u, v, lu, hu, lv, hv)

    _, u, v, lu, hu, lv, hv = best
    center = u * (lu + hu) / 2 + v * (lv + hv) / 2
    theta = math.atan2(u[1], u[0])
    return canonicalize(RotatedBox(float(center[0]), float(center[1]),
                                   float(hu - lu), float(hv - lv), theta))


def angular_error(a, b, period):
    """Distance between angles modulo ``period``; lies in [0, period/2]."""
    if period <= 0:
        raise ValueError("period must be positive")
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), period)
    out = np.minimum(d, period - d)
    return float(out) if out.ndim == 0 else out
