"""Desk-scale fitting experiment for the boundary discontinuity problem.

A small MLP maps the continuous embedding ``(cos phi, sin phi)`` of an
object's orientation to an angle prediction. The ``direct`` arm regresses the
box angle itself, which is a sawtooth of ``phi`` with jumps at ``phi = 0`` and
``phi = pi``; the ``acm-*`` arms regress the polar encodings instead and decode
them afterwards. Sweeping a trained model over a full turn of ``phi`` exposes
where the prediction collapses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .acm import decode, decode_full, encode
from .errors import DivergedTraining
from .geom import HALF_PI, PI, TWO_PI, ObjectPose, RotatedBox, angular_error, box_of_object
from .iou import skew_iou
from .loss import BOX_KINDS, LossWeights, TargetRecord, acl_terms, box_terms, smooth_l1_terms

log = logging.getLogger(__name__)

ARMS = ("direct", "acm-w1", "acm-w2", "acm-w4", "acm-fused")
ARM_OMEGAS = {
    "direct": (),
    "acm-w1": (1,),
    "acm-w2": (2,),
    "acm-w4": (4,),
    "acm-fused": (2, 4),
}
FIT_KINDS = ("smooth_l1",) + BOX_KINDS
SHORT_SIDE = 1.0


def symmetry_period(aspect: float) -> float:
    return HALF_PI if aspect == 1 else PI


# -- data -------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSample:
    phi: float
    aspect: float
    features: tuple
    pose: ObjectPose
    target: TargetRecord


def make_sample(phi: float, aspect: float, aspect_feature: bool = False) -> SyntheticSample:
    pose = ObjectPose(0.0, 0.0, SHORT_SIDE * aspect, SHORT_SIDE, phi)
    box = box_of_object(pose, symmetry_period(aspect))
    feats = (math.cos(pose.phi), math.sin(pose.phi))
    if aspect_feature:
        feats += (math.log(aspect),)
    return SyntheticSample(pose.phi, float(aspect), feats, pose, TargetRecord(box))


def _aspect_list(aspect) -> tuple:
    if isinstance(aspect, (int, float)):
        return (float(aspect),)
    return tuple(float(a) for a in aspect)


def generate_dataset(n: int, aspect=4.0, seed: int = 0) -> list[SyntheticSample]:
    """``n`` objects with orientation uniform on [0, 2*pi).

    ``aspect`` is one ratio, or a sequence of ratios assigned round-robin; a
    mixed dataset also appends ``log(aspect)`` to the features so the model
    can tell shapes apart.
    """
    aspects = _aspect_list(aspect)
    if n < 1:
        raise ValueError("n must be at least 1")
    if any(a < 1 for a in aspects):
        raise ValueError("aspect ratios must be >= 1")
    rng = np.random.default_rng([seed, 0])
    phis = rng.uniform(0.0, TWO_PI, size=n)
    mixed = len(aspects) > 1
    return [make_sample(float(p), aspects[i % len(aspects)], mixed) for i, p in enumerate(phis)]


# -- model ------------------------------------------------------------------


def n_outputs(arm: str, free_box: bool = False) -> int:
    n = 1 if arm == "direct" else 2 * len(ARM_OMEGAS[arm])
    return n + (4 if free_box else 0)


@dataclass
class Regressor:
    """Tanh MLP with one output head per experiment arm."""

    arm: str
    widths: tuple
    params: list
    aspect_feature: bool = False
    free_box: bool = False

    @classmethod
    def init(cls, arm, hidden=(64, 64), seed=0, aspect_feature=False, free_box=False):
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")
        widths = (3 if aspect_feature else 2, *hidden, n_outputs(arm, free_box))
        rng = np.random.default_rng([seed, 1])
        params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(arm, widths, params, aspect_feature, free_box)

    def forward(self, x, params=None):
        params = self.params if params is None else params
        h = x
        n_layers = len(params) // 2
        for i in range(n_layers):
            h = h @ params[2 * i] + params[2 * i + 1]
            if i < n_layers - 1:
                h = ad.tanh(h)
        return h

    def features(self, phi, aspect):
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        cols = [np.cos(phi), np.sin(phi)]
        if self.aspect_feature:
            cols.append(np.full_like(phi, math.log(aspect)))
        return np.stack(cols, axis=1)

    def outputs(self, phi, aspect):
        return self.forward(self.features(phi, aspect))

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "widths": list(self.widths),
            "aspect_feature": self.aspect_feature,
            "free_box": self.free_box,
            "params": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Regressor":
        return cls(d["arm"], tuple(d["widths"]), [np.asarray(p, dtype=float) for p in d["params"]],
                   d.get("aspect_feature", False), d.get("free_box", False))


class OracleModel:
    """Stands in for a perfect regressor: emits exact target encodings."""

    free_box = False

    def __init__(self, arm="acm-fused"):
        self.arm = arm

    def outputs(self, phi, aspect):
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        theta = np.mod(phi, symmetry_period(aspect))
        if self.arm == "direct":
            return theta[:, None]
        cols = []
        for omega in ARM_OMEGAS[self.arm]:
            cols.extend(encode(theta, omega))
        return np.stack(cols, axis=1)


def decode_angle(arm, out):
    """Arm-appropriate angle from raw head outputs (array or autodiff Var)."""
    if arm == "direct":
        return out[:, 0]
    omegas = ARM_OMEGAS[arm]
    if arm == "acm-fused":
        return decode_full((out[:, 0], out[:, 1], out[:, 2], out[:, 3]))
    return decode(out[:, 0], out[:, 1], omegas[0])


def predicted_boxes(model, out, targets):
    """``(cx, cy, w, h, theta)`` columns of predicted boxes."""
    theta = decode_angle(model.arm, out)
    if model.free_box:
        k = out.shape[1] - 4
        return (out[:, k], out[:, k + 1], ad.exp(out[:, k + 2]), ad.exp(out[:, k + 3]), theta)
    return (targets[:, 0], targets[:, 1], targets[:, 2], targets[:, 3], theta)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    arm: str = "acm-fused"
    kind: str | None = None
    aspect: float | tuple = 4.0
    n_samples: int = 512
    epochs: int = 10000
    lr: float = 0.2
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    hidden: tuple = (64, 64)
    free_box: bool = False

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}; expected one of {ARMS}")
        kind = self.kind
        if kind is None:
            kind = "smooth_l1" if self.arm == "direct" else "kfiou"
            object.__setattr__(self, "kind", kind)
        if kind not in FIT_KINDS:
            raise ValueError(f"unknown loss kind {kind!r}")
        if kind == "smooth_l1" and self.arm != "direct":
            raise ValueError("smooth_l1 on the raw angle only applies to the direct arm")
        if self.n_samples < 1 or self.epochs < 1 or self.lr <= 0:
            raise ValueError("n_samples, epochs and lr must be positive")
        object.__setattr__(self, "aspect", _normalize_aspect(self.aspect))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))

    @property
    def mixed(self) -> bool:
        return isinstance(self.aspect, tuple)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aspect"] = list(self.aspect) if self.mixed else self.aspect
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def _normalize_aspect(aspect):
    aspects = _aspect_list(aspect)
    if any(a < 1 for a in aspects):
        raise ValueError("aspect ratios must be >= 1")
    return aspects[0] if len(aspects) == 1 else aspects


@dataclass
class TrainResult:
    model: Regressor
    config: FitConfig
    history: list


def _batch_loss(model, params, x, targets, cfg):
    out = model.forward(x, params)
    theta_t = targets[:, 4]
    if cfg.arm == "direct" and cfg.kind == "smooth_l1":
        per = smooth_l1_terms(out[:, 0] - theta_t)
        if model.free_box:
            k = out.shape[1] - 4
            goal = (targets[:, 0], targets[:, 1], np.log(targets[:, 2]), np.log(targets[:, 3]))
            for j in range(4):
                per = per + smooth_l1_terms(out[:, k + j] - goal[j])
        return per.mean()
    box = box_terms(predicted_boxes(model, out, targets),
                    tuple(targets[:, j] for j in range(5)), cfg.kind)
    if cfg.arm == "direct":
        return box.mean()
    total = cfg.weights.lambda_box * box
    if cfg.weights.lambda_acm:
        n = 2 * len(ARM_OMEGAS[cfg.arm])
        comps = tuple(out[:, j] for j in range(n))
        total = total + cfg.weights.lambda_acm * acl_terms(comps, theta_t, ARM_OMEGAS[cfg.arm])
    return total.mean()


def target_array(samples) -> np.ndarray:
    return np.array([s.target.box.as_tuple() for s in samples], dtype=float)


def train(cfg: FitConfig, log_every: int = 0) -> TrainResult:
    """Full-batch gradient descent with a fixed step; deterministic per seed."""
    samples = generate_dataset(cfg.n_samples, cfg.aspect, cfg.seed)
    model = Regressor.init(cfg.arm, cfg.hidden, cfg.seed, aspect_feature=cfg.mixed,
                           free_box=cfg.free_box)
    x = np.array([s.features for s in samples])
    targets = target_array(samples)
    history = []
    for epoch in range(cfg.epochs):
        params = [ad.Var(p) for p in model.params]
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            loss = _batch_loss(model, params, x, targets, cfg)
        value = float(loss.value)
        if not math.isfinite(value):
            raise DivergedTraining(epoch, value)
        history.append(value)
        loss.backward()
        model.params = [p.value - cfg.lr * p.grad for p in params]
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.6f", epoch, value)
    return TrainResult(model, cfg, history)


# -- evaluation -------------------------------------------------------------


@dataclass
class SweepReport:
    arm: str
    aspect: float
    phi: np.ndarray
    theta_pred: np.ndarray
    theta_target: np.ndarray
    ang_err: np.ndarray
    iou: np.ndarray
    raw: np.ndarray

    @property
    def max_err(self) -> float:
        return float(self.ang_err.max())

    @property
    def mean_err(self) -> float:
        return float(self.ang_err.mean())

    @property
    def min_iou(self) -> float:
        return float(self.iou.min())

    @property
    def mean_iou(self) -> float:
        return float(self.iou.mean())

    @property
    def breakpoint_width(self) -> float:
        return breakpoint_width(self.phi, self.iou)

    def summary(self) -> dict:
        return {
            "max_err": self.max_err,
            "mean_err": self.mean_err,
            "min_iou": self.min_iou,
            "mean_iou": self.mean_iou,
            "breakpoint_width": self.breakpoint_width,
        }

    def rows(self):
        return zip(self.phi, self.theta_pred, self.theta_target, self.ang_err, self.iou)


def breakpoint_width(phi, iou, center=PI, reach=0.2, threshold=0.5) -> float:
    """Angular length of the widest run of ``iou < threshold`` touching ``center +- reach``.

    Runs wrap around the circle; 0 when no such run exists.
    """
    phi = np.asarray(phi)
    bad = np.asarray(iou) < threshold
    n = len(bad)
    if n == 0 or not bad.any():
        return 0.0
    step = TWO_PI / n
    if bad.all():
        return TWO_PI
    start = int(np.argmin(bad))  # a good point, so runs never straddle the scan start
    best = 0
    run, touches = 0, False
    for k in range(1, n + 1):
        i = (start + k) % n
        if bad[i]:
            run += 1
            touches |= abs(angular_error(phi[i], center, TWO_PI)) < reach
        else:
            if touches:
                best = max(best, run)
            run, touches = 0, False
    return best * step


def sweep_eval(model, steps: int = 360, aspect: float = 4.0) -> SweepReport:
    """Rotate the object through a full turn and score each prediction."""
    phi = np.arange(steps) * (TWO_PI / steps)
    period = symmetry_period(aspect)
    theta_t = np.mod(phi, period)
    out = np.asarray(ad.value_of(model.outputs(phi, aspect)))
    theta_p = np.asarray(decode_angle(model.arm, out), dtype=float)
    err = angular_error(theta_p, theta_t, period)
    w, h = SHORT_SIDE * aspect, SHORT_SIDE
    if getattr(model, "free_box", False):
        k = out.shape[1] - 4
        pboxes = [RotatedBox(float(out[i, k]), float(out[i, k + 1]), math.exp(out[i, k + 2]),
                             math.exp(out[i, k + 3]), float(theta_p[i])) for i in range(steps)]
    else:
        pboxes = [RotatedBox(0.0, 0.0, w, h, float(t)) for t in theta_p]
    ious = np.array([skew_iou(pb, RotatedBox(0.0, 0.0, w, h, float(t)))
                     for pb, t in zip(pboxes, theta_t)])
    return SweepReport(model.arm, float(aspect), phi, np.mod(theta_p, PI), theta_t, err, ious, out)


# -- ablation ---------------------------------------------------------------

ABLATION_ASPECTS = (4.0, 1.0)
METRICS = ("max_err", "mean_err", "min_iou", "mean_iou", "breakpoint_width")


@dataclass(frozen=True)
class Check:
    """One ordering claim evaluated per seed and on the seed mean."""

    name: str
    description: str
    per_seed: tuple
    seed_mean: bool
    require_mean: bool = True

    @property
    def passed(self) -> bool:
        n = len(self.per_seed)
        enough = sum(self.per_seed) >= math.ceil(2 * n / 3)
        return enough and (self.seed_mean or not self.require_mean)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "per_seed": list(self.per_seed),
            "seed_mean": self.seed_mean,
            "require_mean": self.require_mean,
            "passed": self.passed,
        }


@dataclass
class AblationReport:
    seeds: tuple
    base: FitConfig
    runs: list
    checks: list

    def metric(self, arm, aspect, name, lambda_acm=None):
        lam = self.base.weights.lambda_acm if lambda_acm is None else lambda_acm
        return np.array([r[name] for r in self.runs
                         if r["arm"] == arm and r["aspect"] == aspect and r["lambda_acm"] == lam])

    def groups(self):
        seen = []
        for r in self.runs:
            key = (r["arm"], r["aspect"], r["lambda_acm"])
            if key not in seen:
                seen.append(key)
        return seen

    def summary(self) -> list:
        rows = []
        for arm, aspect, lam in self.groups():
            vals = {m: self.metric(arm, aspect, m, lam) for m in METRICS}
            rows.append({
                "arm": arm,
                "aspect": aspect,
                "lambda_acm": lam,
                "mean": {m: float(v.mean()) for m, v in vals.items()},
                "std": {m: float(v.std()) for m, v in vals.items()},
            })
        return rows

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "base_config": self.base.to_dict(),
            "runs": self.runs,
            "summary": self.summary(),
            "checks": [c.to_dict() for c in self.checks],
        }


def _compare(report, name, description, left, right, op, metric="min_iou", require_mean=True):
    """``left op right`` on ``metric``; sides are ``(arm, aspect, lambda_acm)``."""
    a = report.metric(*left[:2], metric, left[2])
    b = report.metric(*right[:2], metric, right[2])
    per_seed = tuple(bool(op(x, y)) for x, y in zip(a, b))
    return Check(name, description, per_seed, bool(op(a.mean(), b.mean())), require_mean)


def _ordering_checks(report) -> list:
    lam = report.base.weights.lambda_acm
    ge, gt, lt = (lambda x, y: x >= y), (lambda x, y: x > y), (lambda x, y: x < y)
    rect, square = 4.0, 1.0
    checks = [
        _compare(report, "rect_fused_ge_w2", "rectangles: min-IoU acm-fused >= acm-w2",
                 ("acm-fused", rect, lam), ("acm-w2", rect, lam), ge),
        _compare(report, "rect_w2_gt_w1", "rectangles: min-IoU acm-w2 > acm-w1",
                 ("acm-w2", rect, lam), ("acm-w1", rect, lam), gt),
        _compare(report, "rect_w1_gt_direct", "rectangles: min-IoU acm-w1 > direct",
                 ("acm-w1", rect, lam), ("direct", rect, lam), gt),
    ]

    others = [a for a in ARMS if a != "acm-w4"]
    w4 = report.metric("acm-w4", rect, "mean_err", lam)
    rest = np.array([report.metric(a, rect, "mean_err", lam) for a in others])
    w4_iou = report.metric("acm-w4", rect, "min_iou", lam)
    rest_iou = np.array([report.metric(a, rect, "min_iou", lam) for a in others])
    # worst on both counts: lowest min-IoU and largest mean angular error
    checks.append(Check(
        "rect_w4_worst", "rectangles: acm-w4 has the lowest min-IoU and the largest mean angular error",
        tuple(bool(w4_iou[i] <= rest_iou[:, i].min() and w4[i] > rest[:, i].max())
              for i in range(len(w4))),
        bool(w4_iou.mean() <= rest_iou.mean(axis=1).min()
             and w4.mean() > rest.mean(axis=1).max())))
    checks.append(Check(
        "rect_w4_err_ge_quarter_pi", "rectangles: acm-w4 mean angular error >= pi/4",
        tuple(bool(e >= PI / 4) for e in w4), bool(w4.mean() >= PI / 4)))

    checks += [
        _compare(report, "square_w4_gt_w2", "squares: min-IoU acm-w4 > acm-w2",
                 ("acm-w4", square, lam), ("acm-w2", square, lam), gt),
        _compare(report, "square_fused_gt_w2", "squares: min-IoU acm-fused > acm-w2",
                 ("acm-fused", square, lam), ("acm-w2", square, lam), gt),
        _compare(report, "acl_ablation", "rectangles: acm-fused min-IoU drops with lambda_acm = 0",
                 ("acm-fused", rect, 0.0), ("acm-fused", rect, lam), lt, require_mean=False),
    ]
    return checks


def ablation_suite(seeds: Sequence[int] = (0, 1, 2), base: FitConfig | None = None,
                   steps: int = 360, progress=None, cache: dict | None = None) -> AblationReport:
    """Train every arm on rectangles and squares, plus the fused arm without ACL.

    ``base`` supplies the shared training settings; its arm, aspect, kind and
    seed are overridden per run. ``progress`` is called with each finished run.
    ``cache`` maps :class:`FitConfig` to :class:`TrainResult`; hits skip
    training and new results are added to it.
    """
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 3:
        raise ValueError("ablation needs at least 3 seeds")
    base = base or FitConfig()
    lam = base.weights.lambda_acm
    plan = [(arm, aspect, base.weights) for aspect in ABLATION_ASPECTS for arm in ARMS]
    plan.append(("acm-fused", ABLATION_ASPECTS[0], LossWeights(base.weights.lambda_box, 0.0)))
    if lam == 0.0:
        raise ValueError("the base config must use a non-zero lambda_acm")

    runs = []
    for arm, aspect, weights in plan:
        for seed in seeds:
            cfg = FitConfig(arm=arm, aspect=aspect, n_samples=base.n_samples, epochs=base.epochs,
                            lr=base.lr, seed=seed, weights=weights, hidden=base.hidden,
                            free_box=base.free_box)
            result = cache.get(cfg) if cache is not None else None
            if result is None:
                result = train(cfg)
                if cache is not None:
                    cache[cfg] = result
            row = {"arm": arm, "aspect": aspect, "lambda_acm": weights.lambda_acm,
                   "seed": seed, "kind": cfg.kind, "final_loss": result.history[-1]}
            row.update(sweep_eval(result.model, steps, aspect).summary())
            runs.append(row)
            if progress:
                progress(row)
    report = AblationReport(seeds, base, runs, [])
    report.checks = _ordering_checks(report)
    return report
