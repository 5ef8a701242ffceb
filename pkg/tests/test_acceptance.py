"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary block at the end
lists every verdict) or directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import record  # noqa: E402
from acmbox import autodiff as ad  # noqa: E402
from acmbox.acm import decode, decode_full, encode, encode_full, fuse  # noqa: E402
from acmbox.evaluate import COCO_THRESHOLDS, Detection, GroundTruth, average_precision  # noqa: E402
from acmbox.gauss import Gaussian2, gwd, kfiou, kld, sqrtm_spd2  # noqa: E402
from acmbox.geom import HALF_PI, PI, RotatedBox, angular_error  # noqa: E402
from acmbox.iou import raster_iou_oracle, skew_iou  # noqa: E402
from acmbox.loss import HEAD_FIELDS, acl_loss, box_loss, focal_loss, value_and_grad  # noqa: E402
from ap_oracle import brute_force_ap  # noqa: E402
from gradcheck import fd_grad, rel_error  # noqa: E402

N_GRID = 10_000


def theta_sample():
    return np.random.default_rng(100).uniform(0.0, PI, size=N_GRID)


# -- 1 ----------------------------------------------------------------------

def criterion_1():
    start = time.perf_counter()
    theta = theta_sample()
    errs = {w: float(np.max(np.abs(decode(*encode(theta, w), w) - theta))) for w in (1, 2)}
    back4 = decode(*encode(theta, 4), 4)
    upper = theta >= HALF_PI
    resid = float(np.max(np.abs((theta - back4)[upper] - HALF_PI)))
    lower = float(np.max(np.abs(back4[~upper] - theta[~upper])))
    elapsed = time.perf_counter() - start
    ok = max(errs.values()) < 1e-9 and resid < 1e-9 and lower < 1e-9 and elapsed < 1.0
    return ok, (f"w1 err {errs[1]:.1e}, w2 err {errs[2]:.1e}, w4 residual-pi/2 err {resid:.1e}, "
                f"{elapsed:.3f}s")


# -- 2 ----------------------------------------------------------------------

def criterion_2():
    theta = theta_sample()
    exact = float(np.max(np.abs(fuse(np.mod(theta, PI), np.mod(theta, HALF_PI)) - theta)))
    enc = np.array(encode_full(theta))  # (4, N)
    worst = np.zeros(N_GRID)
    # every vertex and face centre of the noise box
    levels = (-0.05, 0.0, 0.05)
    patterns = np.stack(np.meshgrid(*[levels] * 4, indexing="ij"), -1).reshape(-1, 4)
    rng = np.random.default_rng(101)
    patterns = np.vstack([patterns, rng.uniform(-0.05, 0.05, size=(200, 4))])
    for delta in patterns:
        got = decode_full(tuple(enc + delta[:, None]))
        worst = np.maximum(worst, angular_error(got, theta, PI))
    bound = float(worst.max())
    ok = exact < 1e-9 and bound < 0.08
    return ok, f"exact-input err {exact:.1e}; worst noisy err {bound:.4f} rad over {len(patterns)} patterns"


# -- 3 ----------------------------------------------------------------------

def random_pair(rng):
    w = rng.uniform(0.5, 3)
    a = RotatedBox(0, 0, w, w / rng.uniform(1, 10), rng.uniform(0, PI))
    shift, ang = rng.uniform(0, 1.2) * w, rng.uniform(0, 2 * PI)
    w2 = w * rng.uniform(0.5, 1.5)
    b = RotatedBox(shift * math.cos(ang), shift * math.sin(ang), w2, w2 / rng.uniform(1, 10),
                   rng.uniform(0, PI))
    return a, b


def criterion_3():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    gaps, ious = [], []
    for _ in range(200):
        a, b = random_pair(rng)
        v = skew_iou(a, b)
        ious.append(v)
        gaps.append(abs(v - raster_iou_oracle(a, b, 1000)))
    sq = RotatedBox(0, 0, 1, 1, 0)
    pins = (
        skew_iou(sq, sq) == 1.0,
        abs(skew_iou(sq, RotatedBox(0.5, 0, 1, 1, 0)) - 1 / 3) < 1e-12,
        abs(skew_iou(sq, RotatedBox(0, 0, 1, 1, PI / 4)) - math.sqrt(2) / 2) < 1e-9,
    )
    elapsed = time.perf_counter() - start
    ok = max(gaps) < 5e-3 and all(pins) and elapsed < 30
    return ok, (f"max |skew - raster| {max(gaps):.2e} (IoU range {min(ious):.2f}-{max(ious):.2f}), "
                f"pins {pins}, {elapsed:.1f}s")


# -- 4 ----------------------------------------------------------------------

def criterion_4():
    g = Gaussian2([0.3, -1.2], [[2.0, 0.4], [0.4, 1.0]])
    checks = {
        "gwd identity": abs(gwd(g, g)) < 1e-12,
        "kld identity": abs(kld(g, g)) < 1e-12,
        "gwd offset": abs(gwd(g, Gaussian2([3.3, 2.8], g.sigma)) - 25.0) < 1e-12,
        "gwd swap": abs(gwd(Gaussian2([0, 0], np.diag([4.0, 1.0])),
                            Gaussian2([0, 0], np.diag([1.0, 4.0]))) - 2.0) < 1e-9,
        "kld swap": abs(kld(Gaussian2([0, 0], np.diag([4.0, 1.0])),
                            Gaussian2([0, 0], np.diag([1.0, 4.0]))) - 1.125) < 1e-9,
        "kfiou identity": abs(kfiou(g, g) - 1 / 3) < 1e-12,
    }
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(1000):
        q = np.linalg.qr(rng.normal(size=(2, 2)))[0]
        big = 10 ** rng.uniform(-3, 3)
        m = q @ np.diag([big, big / 10 ** rng.uniform(0, 6)]) @ q.T
        vals, vecs = np.linalg.eigh(m)
        ref = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
        worst = max(worst, float(np.abs(sqrtm_spd2(m) - ref).max() / max(1.0, np.abs(ref).max())))
    checks["sqrtm"] = worst < 1e-10
    failed = [k for k, v in checks.items() if not v]
    return not failed, f"sqrtm max err {worst:.1e}; failed pins: {failed or 'none'}"


# -- 5 ----------------------------------------------------------------------

def _random_head_and_target(rng):
    from acmbox.acm import EncodedAngle
    from acmbox.loss import PredictionHead, TargetRecord

    theta = rng.uniform(0, PI)
    enc = np.array(encode_full(theta)) * rng.uniform(0.7, 1.3) + rng.normal(0, 0.1, size=4)
    head = PredictionHead(rng.uniform(0.05, 0.95), *rng.normal(0, 0.5, size=2),
                          *np.log(rng.uniform(0.5, 5, size=2)), EncodedAngle(*enc))
    target = TargetRecord(RotatedBox(*rng.normal(0, 0.5, size=2), *rng.uniform(0.5, 5, size=2),
                                     rng.uniform(0, PI)).canonical())
    return head, target


def criterion_5():
    from acmbox.loss import PredictionHead

    rng = np.random.default_rng(104)
    worst = {}
    errs = []
    for _ in range(100):
        pred, t = rng.normal(size=4), rng.uniform(0, PI)
        _, g = ad.value_and_grad(lambda *p: acl_loss(p, t), *pred)
        errs.append(rel_error(np.array(g, dtype=float), fd_grad(lambda p: acl_loss(p, t), pred)))
    worst["acl"] = max(errs)
    errs = []
    for _ in range(100):
        p, c = rng.uniform(0.01, 0.99), int(rng.integers(0, 2))
        _, (g,) = ad.value_and_grad(lambda x: focal_loss(x, c), p)
        errs.append(rel_error(g, fd_grad(lambda x: focal_loss(float(x[0]), c), [p])))
    worst["focal"] = max(errs)
    for kind in ("gwd", "kld", "kfiou"):
        errs = []
        for _ in range(100):
            head, target = _random_head_and_target(rng)
            _, grads = value_and_grad(box_loss, head, target, kind)
            ref = fd_grad(lambda v: box_loss(PredictionHead.from_vector(v), target, kind),
                          head.as_vector())
            errs.append(rel_error(np.array([grads[k] for k in HEAD_FIELDS]), ref))
        worst[kind] = max(errs)
    ok = max(worst.values()) < 1e-4
    return ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


# -- 6 ----------------------------------------------------------------------

def criterion_6(reference_runs):
    lines, ok = [], True
    for seed in (0, 1, 2):
        d = reference_runs.runs["direct", seed].sweep
        near = angular_error(d.phi, PI, 2 * PI) < 0.2
        d_min = float(d.iou[near].min())
        w = reference_runs.runs["acm-w2", seed].sweep
        w_err = math.degrees(w.max_err)
        ok &= d_min < 0.5 and w.min_iou > 0.9 and w_err < 5.0
        lines.append(f"s{seed}: direct minIoU@pi {d_min:.3f}, w2 minIoU {w.min_iou:.3f} maxerr {w_err:.2f}deg")
    ok &= reference_runs.elapsed < 300
    return ok, "; ".join(lines) + f"; train {reference_runs.elapsed:.0f}s"


# -- 7 / 8 ------------------------------------------------------------------

CRITERION_7 = ("rect_fused_ge_w2", "rect_w2_gt_w1", "rect_w1_gt_direct", "rect_w4_worst",
               "rect_w4_err_ge_quarter_pi", "square_w4_gt_w2", "square_fused_gt_w2")


def _describe(report, names):
    return ", ".join(
        f"{n} {'ok' if report.check(n).passed else 'FAILED'}"
        f"[{''.join('+' if p else '-' for p in report.check(n).per_seed)}"
        f"{' mean+' if report.check(n).seed_mean else ' mean-'}]"
        for n in names)


def criterion_7(report):
    ok = all(report.check(n).passed for n in CRITERION_7)
    mins = {arm: report.metric(arm, 4.0, "min_iou").mean()
            for arm in ("direct", "acm-w1", "acm-w2", "acm-w4", "acm-fused")}
    sq = {arm: report.metric(arm, 1.0, "min_iou").mean() for arm in ("acm-w2", "acm-w4", "acm-fused")}
    w4_err = report.metric("acm-w4", 4.0, "mean_err").mean()
    detail = (_describe(report, CRITERION_7)
              + "; rect mean minIoU " + ", ".join(f"{k} {v:.3f}" for k, v in mins.items())
              + f"; w4 mean err {w4_err:.3f} (pi/4 = {PI / 4:.3f})"
              + "; square mean minIoU " + ", ".join(f"{k} {v:.3f}" for k, v in sq.items()))
    return ok, detail


def criterion_8(report):
    c = report.check("acl_ablation")
    off = report.metric("acm-fused", 4.0, "min_iou", 0.0)
    on = report.metric("acm-fused", 4.0, "min_iou")
    return c.passed, (f"min-IoU lambda_acm=0 {np.round(off, 3).tolist()} vs 0.2 "
                      f"{np.round(on, 3).tolist()}; worse on {sum(c.per_seed)}/{len(c.per_seed)} seeds")


# -- 9 ----------------------------------------------------------------------

def criterion_9():
    from test_evaluate import random_instance

    rng = np.random.default_rng(105)
    worst, monotone = 0.0, True
    for _ in range(20):
        dets, gts = random_instance(rng)
        aps = [average_precision(dets, gts, t) for t in COCO_THRESHOLDS]
        monotone &= all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))
        for t, ap in zip((0.5, 0.75), (aps[0], aps[5])):
            worst = max(worst, abs(ap - brute_force_ap(dets, gts, t)))
    gt = GroundTruth("a", 0, RotatedBox(0, 0, 4, 1, 0))
    pinned = average_precision([Detection("a", 0, 0.9, RotatedBox(9, 0, 4, 1, 0)),
                                Detection("a", 0, 0.5, RotatedBox(0, 0, 4, 1, 0))], [gt], 0.5)
    ok = worst < 1e-9 and abs(pinned - 0.5) < 1e-12 and monotone
    return ok, f"max |AP - oracle| {worst:.1e}, FP-then-TP AP {pinned:.6f}, monotone {monotone}"


# -- 10 ---------------------------------------------------------------------

def criterion_10(tmp_path):
    from test_cli import DETERMINISM_CASES, rerun_identical

    verdicts = {}
    for k, argv in enumerate(DETERMINISM_CASES):
        verdicts[argv[0]] = rerun_identical(tmp_path / str(k), argv)
    bad = [k for k, v in verdicts.items() if not v]
    return not bad, f"subcommands {sorted(verdicts)}; differing: {bad or 'none'}"


# -- pytest wrappers --------------------------------------------------------

def check(number, outcome):
    ok, detail = outcome
    record(number, ok, detail)
    assert ok, detail


def test_criterion_01_acm_round_trip():
    check(1, criterion_1())


def test_criterion_02_fusion():
    check(2, criterion_2())


def test_criterion_03_skewiou_oracle():
    check(3, criterion_3())


def test_criterion_04_gaussian_pins():
    check(4, criterion_4())


def test_criterion_05_gradients():
    check(5, criterion_5())


@pytest.mark.slow
def test_criterion_06_boundary_phenomenon(reference_runs):
    check(6, criterion_6(reference_runs))


@pytest.mark.slow
def test_criterion_07_frequency_ablation(ablation_report):
    check(7, criterion_7(ablation_report))


@pytest.mark.slow
def test_criterion_08_acl_ablation(ablation_report):
    check(8, criterion_8(ablation_report))


def test_criterion_09_ap_oracle():
    check(9, criterion_9())


def test_criterion_10_cli_determinism(tmp_path):
    check(10, criterion_10(tmp_path))


if __name__ == "__main__":
    import tempfile

    from conftest import SEEDS
    from acmbox.fit import FitConfig, ablation_suite, sweep_eval, train
    from types import SimpleNamespace

    outcomes = {}
    for n, fn in ((1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4),
                  (5, criterion_5), (9, criterion_9)):
        outcomes[n] = record(n, *fn())
    with tempfile.TemporaryDirectory() as tmp:
        outcomes[10] = record(10, *criterion_10(Path(tmp)))
    cache, runs, start = {}, {}, time.perf_counter()
    for arm in ("direct", "acm-w2"):
        for seed in SEEDS:
            cfg = FitConfig(arm=arm, seed=seed)
            cache[cfg] = res = train(cfg)
            runs[arm, seed] = SimpleNamespace(result=res, sweep=sweep_eval(res.model))
    outcomes[6] = record(6, *criterion_6(SimpleNamespace(runs=runs, elapsed=time.perf_counter() - start)))
    report = ablation_suite(SEEDS, cache=cache)
    outcomes[7] = record(7, *criterion_7(report))
    outcomes[8] = record(8, *criterion_8(report))
    sys.exit(0 if all(outcomes.values()) else 1)
