"""Exact IoU of rotated rectangles via convex polygon clipping."""

from __future__ import annotations

import numpy as np

from .geom import RotatedBox, corners, polygon_area

_EPS = 1e-12


def _dedupe(points):
    out = []
    for p in points:
        if not out or abs(p[0] - out[-1][0]) > _EPS or abs(p[1] - out[-1][1]) > _EPS:
            out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= _EPS and abs(out[0][1] - out[-1][1]) <= _EPS:
        out.pop()
    return out


def clip(subject, clipper) -> np.ndarray:
    """Intersect two convex CCW polygons (Sutherland-Hodgman).

    Returns an (k, 2) array, CCW, possibly empty.
    """
    output = [tuple(map(float, p)) for p in np.asarray(subject, dtype=float)]
    cl = [tuple(map(float, p)) for p in np.asarray(clipper, dtype=float)]
    n = len(cl)
    for i in range(n):
        if not output:
            break
        ax, ay = cl[i]
        bx, by = cl[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inputs, output = output, []
        prev = inputs[-1]
        sp = side(prev)
        for cur in inputs:
            sc = side(cur)
            if sc >= -_EPS:
                if sp < -_EPS:
                    output.append(_cross_point(prev, cur, sp, sc))
                output.append(cur)
            elif sp >= -_EPS:
                output.append(_cross_point(prev, cur, sp, sc))
            prev, sp = cur, sc
        output = _dedupe(output)
    if len(output) < 3:
        return np.empty((0, 2))
    return np.array(output)


def _cross_point(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def skew_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of two rotated boxes; exactly symmetric."""
    if a == b:
        return 1.0
    # fixed argument order makes the result bit-identical under swapping
    if b.as_tuple() < a.as_tuple():
        a, b = b, a
    # work relative to a shared origin to limit cancellation
    ox, oy = (a.cx + b.cx) / 2, (a.cy + b.cy) / 2
    pa = corners(RotatedBox(a.cx - ox, a.cy - oy, a.w, a.h, a.theta))
    pb = corners(RotatedBox(b.cx - ox, b.cy - oy, b.w, b.h, b.theta))
    inter = max(polygon_area(clip(pa, pb)), 0.0)
    union = a.area + b.area - inter
    return float(min(max(inter / union, 0.0), 1.0))


def raster_iou_oracle(a: RotatedBox, b: RotatedBox, grid: int = 1000) -> float:
    """Lattice-count IoU estimate on a ``grid`` x ``grid`` point set.

    Independent of the clipping path; used to cross-check :func:`skew_iou`.
    """
    if grid < 100:
        raise ValueError("grid must be at least 100")
    pts = np.vstack([corners(a), corners(b)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    xs = lo[0] + (np.arange(grid) + 0.5) * (hi[0] - lo[0]) / grid
    ys = lo[1] + (np.arange(grid) + 0.5) * (hi[1] - lo[1]) / grid
    X, Y = np.meshgrid(xs, ys)

    def inside(box):
        c, s = np.cos(box.theta), np.sin(box.theta)
        dx, dy = X - box.cx, Y - box.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= box.w / 2) & (np.abs(v) <= box.h / 2)

    ia, ib = inside(a), inside(b)
    both = np.count_nonzero(ia & ib)
    union = np.count_nonzero(ia | ib)
    return both / union if union else 0.0
