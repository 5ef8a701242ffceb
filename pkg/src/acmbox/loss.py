"""Training objective: classification, box and angle-correct terms.

    total = focal(c_p, c_t) + lambda_box * box_loss + lambda_acm * acl_loss

The box term decodes the predicted encoded angle and compares the resulting
rotated box with the target under one of the box measures in ``BOX_KINDS``.
All terms except ``skewiou`` are written against :mod:`acmbox.autodiff` and
have exact gradients. The ``skewiou`` term plugs into the same graph, but its
local derivative is a central finite difference over the five box
parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .acm import EncodedAngle, decode_full, encode
from .errors import LengthMismatch
from .gauss import _box_components, _gwd, _kfiou, _kld
from .geom import RotatedBox
from .iou import skew_iou

BOX_KINDS = ("gwd", "kld", "kfiou", "skewiou")
TAU = 1.0
FD_STEP = 1e-5
HEAD_FIELDS = ("score", "cx", "cy", "log_w", "log_h", "fx2", "fy2", "fx4", "fy4")


@dataclass(frozen=True)
class LossWeights:
    lambda_box: float = 1.0
    lambda_acm: float = 0.2

    def __post_init__(self):
        if self.lambda_box < 0 or self.lambda_acm < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class PredictionHead:
    """Raw detector outputs for one location.

    Width and height are carried as logs so that any real output maps to a
    positive side length.
    """

    score: float
    cx: float
    cy: float
    log_w: float
    log_h: float
    encoded: EncodedAngle

    @property
    def w(self):
        return math.exp(self.log_w)

    @property
    def h(self):
        return math.exp(self.log_h)

    @classmethod
    def from_box(cls, box: RotatedBox, encoded, score=1.0):
        return cls(score, box.cx, box.cy, math.log(box.w), math.log(box.h), EncodedAngle(*encoded))

    def as_vector(self) -> np.ndarray:
        return np.array([self.score, self.cx, self.cy, self.log_w, self.log_h, *self.encoded], dtype=float)

    @classmethod
    def from_vector(cls, v):
        v = [float(x) for x in v]
        return cls(v[0], v[1], v[2], v[3], v[4], EncodedAngle(*v[5:9]))


@dataclass(frozen=True)
class TargetRecord:
    box: RotatedBox
    label: int = 1

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def _sum_last(x):
    return x.sum(axis=-1) if ad.is_var(x) else np.sum(x, axis=-1)


def smooth_l1_terms(diff):
    mag = ad.absolute(diff)
    return ad.where(ad.value_of(mag) < 1.0, 0.5 * diff * diff, mag - 0.5)


def smooth_l1(x, y):
    """Sum of elementwise smooth-L1 (beta = 1) penalties."""
    x = x if ad.is_var(x) else np.asarray(x, dtype=float)
    y = y if ad.is_var(y) else np.asarray(y, dtype=float)
    if len(ad.value_of(x)) != len(ad.value_of(y)):
        raise LengthMismatch(f"lengths differ: {len(ad.value_of(x))} vs {len(ad.value_of(y))}")
    total = _sum_last(smooth_l1_terms(x - y))
    return total if ad.is_var(total) else float(total)


def acl_terms(components, theta_t, omegas=(2, 4)):
    """Per-sample angle-correct loss for arrays of components.

    ``components`` holds ``(fx, fy)`` for each omega in order.
    """
    total = 0.0
    for k, omega in enumerate(omegas):
        tx, ty = encode(theta_t, omega)
        fx, fy = components[2 * k], components[2 * k + 1]
        total = total + smooth_l1_terms(fx - tx) + smooth_l1_terms(fy - ty)
    return total


def acl_loss(pred, theta_t: float) -> float:
    """Smooth-L1 between predicted components and the encoding of ``theta_t``."""
    out = acl_terms(tuple(pred), theta_t)
    return out if ad.is_var(out) else float(out)


def distance_to_loss(d, tau=TAU):
    return 1.0 - 1.0 / (tau + ad.log(1.0 + d))


def box_terms(pred5, target5, kind):
    """Per-sample box loss between ``(cx, cy, w, h, theta)`` tuples."""
    if kind == "skewiou":
        return _skewiou_terms(pred5, target5)
    gp = _box_components(*pred5)
    gt = _box_components(*target5)
    if kind == "gwd":
        return distance_to_loss(_gwd(gp, gt))
    if kind == "kld":
        return distance_to_loss(_kld(gp, gt))
    if kind == "kfiou":
        return 1.0 - 3.0 * _kfiou(gp, gt)
    raise ValueError(f"unknown box loss kind {kind!r}; expected one of {BOX_KINDS}")


def _skewiou_value(p, t):
    return 1.0 - skew_iou(RotatedBox(*p), RotatedBox(*t))


def skewiou_fd_grad(pred: RotatedBox, target: RotatedBox, step=FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``1 - skew_iou`` w.r.t. ``(cx, cy, w, h, theta)``."""
    p = np.array(pred.as_tuple(), dtype=float)
    t = target.as_tuple()
    g = np.empty(5)
    for i in range(5):
        hi, lo = p.copy(), p.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (_skewiou_value(hi, t) - _skewiou_value(lo, t)) / (2 * step)
    return g


def _skewiou_terms(pred5, target5):
    pv = np.broadcast_arrays(*[np.atleast_1d(ad.value_of(x)) for x in pred5])
    tv = np.broadcast_arrays(*[np.atleast_1d(ad.value_of(x)) for x in target5])
    n = max(len(pv[0]), len(tv[0]))
    pv = [np.broadcast_to(x, (n,)) for x in pv]
    tv = [np.broadcast_to(x, (n,)) for x in tv]
    rows_p = np.stack(pv, axis=1)
    rows_t = np.stack(tv, axis=1)
    values = np.array([_skewiou_value(p, t) for p, t in zip(rows_p, rows_t)])
    scalar = all(np.ndim(ad.value_of(x)) == 0 for x in (*pred5, *target5))
    if not any(ad.is_var(x) for x in pred5):
        return float(values[0]) if scalar else values

    grads = np.stack([skewiou_fd_grad(RotatedBox(*p), RotatedBox(*t))
                      for p, t in zip(rows_p, rows_t)])
    parents = tuple(x if ad.is_var(x) else ad.Var(x) for x in pred5)

    def back(g):
        return tuple(g * grads[:, i].reshape(np.shape(g)) if np.ndim(g) else g * grads[0, i]
                     for i in range(5))

    return ad.Var(values[0] if scalar else values, parents, back)


def _pred_box(pred):
    theta = decode_full(pred.encoded)
    return (pred.cx, pred.cy, ad.exp(pred.log_w), ad.exp(pred.log_h), theta)


def box_loss(pred: PredictionHead, target: TargetRecord, kind: str):
    out = box_terms(_pred_box(pred), target.box.as_tuple(), kind)
    return out if ad.is_var(out) else float(out)


def focal_loss(c_p, c_t, alpha=0.25, gamma=2.0):
    """Focal loss on a probability ``c_p`` clamped to [1e-7, 1 - 1e-7]."""
    p = ad.clip(c_p, 1e-7, 1.0 - 1e-7)
    if c_t:
        p_t, alpha_t = p, alpha
    else:
        p_t, alpha_t = 1.0 - p, 1.0 - alpha
    out = -alpha_t * (1.0 - p_t) ** gamma * ad.log(p_t)
    return out if ad.is_var(out) else float(out)


def total_loss(pred: PredictionHead, target: TargetRecord, kind: str,
               weights: LossWeights = LossWeights()):
    out = focal_loss(pred.score, target.label)
    if target.label:
        if weights.lambda_box:
            out = out + weights.lambda_box * box_loss(pred, target, kind)
        if weights.lambda_acm:
            out = out + weights.lambda_acm * acl_loss(pred.encoded, target.box.theta)
    return out if ad.is_var(out) else float(out)


def _head_from_vars(v):
    return PredictionHead(v[0], v[1], v[2], v[3], v[4], EncodedAngle(v[5], v[6], v[7], v[8]))


def value_and_grad(fn, pred: PredictionHead, *args, **kwargs):
    """Evaluate a loss on ``pred`` and its gradient over every head field.

    ``fn`` is any of the loss functions taking a :class:`PredictionHead`
    first. Returns ``(value, {field: d value / d field})``.
    """
    value, grads = ad.value_and_grad(
        lambda *v: fn(_head_from_vars(v), *args, **kwargs), *pred.as_vector())
    return value, {name: float(g) for name, g in zip(HEAD_FIELDS, grads)}
