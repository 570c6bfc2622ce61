"""Acceptance criteria, one PASS/FAIL line each.

The lines are printed as they are decided and repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import record_acceptance
from _gradcheck import numeric_grad, rel_error
from test_features import brute_glcm, brute_stats
from test_strategy import brute_slope
from rqcurve import simcodec
from rqcurve.core import GRID, AnchorPoint, RateQualityCurve
from rqcurve.evaluation import curve_mae, evaluate, evaluate_dynamic, vacc
from rqcurve.features import glcm, glcm_stats, temporal_stats
from rqcurve.ingest import VideoClip, parse_y4m, write_y4m
from rqcurve.nn import LossConfig, loss_eq1
from rqcurve.pipeline import (
    ABLATIONS, PredictorConfig, TrainConfig, _init_model, joint_loss_and_grads, suspend,
    suspend_batch, train,
)
from rqcurve.strategy import crf_for_slope, crf_for_target_vmaf

N = GRID.count
A = GRID.index_of(30.4)
MODES = ("additive", "multiplicative-bitrate")

# thresholds as written in the acceptance criteria
SUSPEND_RTOL, SUSPEND_SECONDS = 1e-9, 1.0
GRAD_TOL, GRAD_SECONDS = 1e-4, 30.0
PILOT_MAE, PILOT_VACC, PILOT_SECONDS = 1.0, 0.95, 600.0
MIN_GAP = 0.05
LOSS_TOL = 1e-12
TARGET, TOLERANCE = 91.0, 1.0


def check(number, ok, detail):
    record_acceptance(number, ok, detail)
    assert ok, detail


def test_criterion_01_paper_scale_note():
    record_acceptance(1, "NOTE",
                      "absolute benchmark numbers need a proprietary encoder and corpus; "
                      "criteria 2-11 are the substitutes")


def test_criterion_02_suspension_exactness():
    rng = np.random.default_rng(2)
    worst = 0.0
    t = time.perf_counter()
    for mode in MODES:
        for _ in range(1000):
            v = np.sort(rng.uniform(0, 100, N))[::-1]
            b = np.sort(rng.uniform(50, 20000, N))[::-1]
            anchor = AnchorPoint(30.4, rng.uniform(50, 20000), rng.uniform(0, 100))
            out = suspend(RateQualityCurve(v, b), anchor, mode)
            worst = max(worst, abs(out.vmaf[A] - anchor.vmaf) / max(abs(anchor.vmaf), 1e-300),
                        abs(out.bitrate[A] - anchor.bitrate) / anchor.bitrate)
    dt = time.perf_counter() - t
    check(2, worst <= SUSPEND_RTOL and dt < SUSPEND_SECONDS,
          f"2x1000 pairs, worst relative error {worst:.1e} (<= {SUSPEND_RTOL:g}), {dt:.2f} s")


def _composite_check(mode, rng):
    b = 4
    x = rng.normal(size=(b, 16))
    y = np.hstack([rng.uniform(40, 100, (b, N)), rng.uniform(100, 5000, (b, N))])
    anchors = np.column_stack([rng.uniform(200, 3000, b), rng.uniform(60, 95, b)])
    cfg = PredictorConfig(suspension_mode=mode, train=TrainConfig(hidden=16, n_blocks=1))
    model = _init_model(cfg, x, y, 0, 16, 0)
    model.net1.frozen_bn = False  # batch statistics: the harder backward path
    for net in (model.net1, model.net2):
        for p in net.params.values():
            p += rng.normal(0, 0.05, p.shape)
    raw, _ = model.net1.forward(x, train=True)
    s = suspend_batch(raw, A, anchors, mode)
    out = s + model.net2.forward(np.hstack([s, x]), train=True)[0]
    # truth close to the output keeps the loss O(1), so round-off stays below the check
    yt = out + np.hstack([rng.normal(0, 0.05, (b, N)), rng.normal(0, 5, (b, N))])
    _, g1, g2 = joint_loss_and_grads(model, x, yt, anchors)
    worst = 0.0
    for net, grads in ((model.net1, g1), (model.net2, g2)):
        for name, p in net.params.items():
            num = numeric_grad(lambda: joint_loss_and_grads(model, x, yt, anchors)[0], p)
            worst = max(worst, rel_error(grads[name], num))
    return worst, model.net1.n_params + model.net2.n_params


def test_criterion_03_composite_gradient():
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    results = {mode: _composite_check(mode, rng) for mode in MODES}
    dt = time.perf_counter() - t
    worst = max(w for w, _ in results.values())
    n_params = next(iter(results.values()))[1]
    check(3, worst <= GRAD_TOL and dt < GRAD_SECONDS,
          f"{n_params} parameters per mode, both modes, worst relative error {worst:.1e} "
          f"(<= {GRAD_TOL:g}), {dt:.1f} s")


# -- simulated-codec cohort shared by criteria 4, 5 and 6 ---------------------------------------


@pytest.fixture(scope="module")
def cohort():
    return simcodec.synth_dataset(2000, 500, seed=7)


@pytest.fixture(scope="module")
def ablations(cohort):
    tr, te = cohort
    out = {}
    for name in ABLATIONS:
        t = time.perf_counter()
        model, _ = train(tr, PredictorConfig(ablation=name), seed=0)
        report = evaluate(model, te, TARGET, TOLERANCE)
        out[name] = (model, report, time.perf_counter() - t)
    return out


@pytest.mark.slow
def test_criterion_04_end_to_end_learning(ablations):
    _, report, dt = ablations["full"]
    ok = report.vmaf_mae <= PILOT_MAE and report.vacc >= PILOT_VACC and dt <= PILOT_SECONDS
    check(4, ok, f"full model test VMAF MAE {report.vmaf_mae:.4f} (<= {PILOT_MAE}), "
                 f"VACC {report.vacc:.3f} (>= {PILOT_VACC}), train+eval {dt:.0f} s")


@pytest.mark.slow
def test_criterion_05_ablation_ordering(ablations):
    mae = {name: r.vmaf_mae for name, (_, r, _) in ablations.items()}
    gaps = {
        "no_suspension/full": mae["no_suspension"] / mae["full"] - 1,
        "no_anchor_features/no_suspension": mae["no_anchor_features"] / mae["no_suspension"] - 1,
        "no_end2end/full": mae["no_end2end"] / mae["full"] - 1,
    }
    ok = all(g >= MIN_GAP for g in gaps.values())
    detail = ", ".join(f"{k} {mae[k]:.4f}" for k in ABLATIONS)
    detail += "; gaps " + ", ".join(f"{k} {g * 100:+.1f}%" for k, g in gaps.items())
    check(5, ok, detail + f" (each >= {MIN_GAP * 100:.0f}%)")


@pytest.mark.slow
def test_criterion_06_dynamic_anchor(ablations, cohort):
    _, te = cohort
    model, fixed, _ = ablations["full"]
    dyn = evaluate_dynamic(model, te, simcodec.SimCodecBackend(), TARGET, TOLERANCE)
    check(6, dyn.vacc >= fixed.vacc,
          f"VACC dynamic {dyn.vacc:.3f} >= fixed {fixed.vacc:.3f} on {dyn.n} videos")


# -- oracles ------------------------------------------------------------------------------------


def _brute_vacc(values):
    return sum(1 for v in values if abs(v - TARGET) < TOLERANCE) / len(values)


def _brute_mae(pred, truth):
    tv = tb = 0.0
    for p, t in zip(pred, truth):
        for i in range(N):
            tv += abs(p.vmaf[i] - t.vmaf[i])
            tb += abs(p.bitrate[i] - t.bitrate[i])
    count = len(pred) * N
    return tv / count, tb / count


def test_criterion_07_metric_oracles():
    rng = np.random.default_rng(7)
    mismatches = boundary_hits = 0
    for _ in range(100):
        n = int(rng.integers(1, 40))
        # quarter steps: |v - 91| lands exactly on 1.0 often, and every sum is exact
        actual = TARGET + rng.integers(-8, 9, n) * 0.25
        boundary_hits += int(np.sum(np.abs(actual - TARGET) == 1.0))
        if vacc(actual, TARGET, TOLERANCE) != _brute_vacc(actual):
            mismatches += 1
        k = int(rng.integers(1, 4))
        pred = [RateQualityCurve(rng.integers(0, 400, N) * 0.25, 1 + rng.integers(0, 4000, N) * 0.25)
                for _ in range(k)]
        truth = [RateQualityCurve(rng.integers(0, 400, N) * 0.25, 1 + rng.integers(0, 4000, N) * 0.25)
                 for _ in range(k)]
        if curve_mae(pred, truth) != _brute_mae(pred, truth):
            mismatches += 1
    check(7, mismatches == 0 and boundary_hits > 0,
          f"100 cohorts, {mismatches} mismatches, {boundary_hits} values at d = 1.0 exactly")


def test_criterion_08_loss_arithmetic():
    t = np.zeros((1, 2 * N))
    p1 = t.copy()
    p1[0, :N] = 1.0
    p2 = t.copy()
    p2[0, N:] = 10.0
    cfg = LossConfig(lam=1e-4)
    e1 = abs(loss_eq1(p1, t, cfg) - 101.0)
    e2 = abs(loss_eq1(p2, t, cfg) - 1.01)
    check(8, max(e1, e2) <= LOSS_TOL,
          f"VMAF-only example error {e1:.1e}, bitrate-only example error {e2:.1e} (<= {LOSS_TOL:g})")


def test_criterion_09_feature_correctness():
    rng = np.random.default_rng(9)
    glcm_err = stats_err = temporal_err = 0.0
    for _ in range(20):
        plane = rng.integers(0, 256, (4, 4))
        for offset in ((1, 0), (0, 1), (1, 1), (-1, 1)):
            for levels in (8, 16):
                m = glcm(plane, offset, levels)
                glcm_err = max(glcm_err, float(np.abs(m - brute_glcm(plane, *offset, levels)).max()))
                ref = np.array(brute_stats(m))
                got = np.array(glcm_stats(m))
                stats_err = max(stats_err, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1))))
    for _ in range(10):
        f = rng.integers(0, 256, (5, 16, 16)).astype(np.uint8)
        clip = VideoClip(16, 16, Fraction(30), f)
        for stride in (1, 2):
            idx = list(range(0, 5, stride))
            mads = [float(np.mean(np.abs(f[b].astype(int) - f[a].astype(int))))
                    for a, b in zip(idx, idx[1:])]
            mean = sum(mads) / len(mads)
            ref = (mean, sum((m - mean) ** 2 for m in mads) / len(mads), max(mads),
                   sum(m < 0.5 for m in mads) / len(mads))
            got = tuple(temporal_stats(clip, stride))[:4]
            temporal_err = max(temporal_err, max(abs(g - r) / max(abs(r), 1) for g, r in zip(got, ref)))
    roundtrips = 0
    for chroma in ("420", "422", "444", "mono"):
        clip = VideoClip(24, 18, Fraction(30000, 1001),
                         rng.integers(0, 256, (3, 18, 24)).astype(np.uint8))
        data = write_y4m(clip, chroma)
        back = parse_y4m(data)
        roundtrips += int(np.array_equal(back.frames, clip.frames) and write_y4m(back, chroma) == data)
    ok = glcm_err <= 1e-15 and stats_err <= 1e-12 and temporal_err <= 1e-12 and roundtrips == 4
    check(9, ok, f"GLCM max error {glcm_err:.1e}, Haralick {stats_err:.1e}, "
                 f"temporal {temporal_err:.1e}, Y4M bit-exact round trips {roundtrips}/4")


def test_criterion_10_strategy_guarantees():
    seeds = np.random.default_rng(10).choice(2**31 - 1, size=500, replace=False)
    reachable = hits = slope_matches = 0
    for seed in seeds:
        theta = simcodec.LatentVideo.from_seed(int(seed)).theta
        curve = simcodec.oracle_curve(theta)
        for target in (85.0, 91.0, 95.0):
            d = crf_for_target_vmaf(curve, target)
            if d.unreachable:
                continue
            reachable += 1
            hits += int(simcodec.vmaf_gt(theta, d.crf) >= target - 1.0)
        slope_matches += int(crf_for_slope(curve).index
                             == brute_slope(curve.vmaf, curve.bitrate, 0.005))
    check(10, hits == reachable and slope_matches == 500,
          f"{hits}/{reachable} reachable targets at >= target - 1, "
          f"slope policy matches brute force on {slope_matches}/500 videos")


def _replay():
    tr, te = simcodec.synth_dataset(300, 100, seed=11)
    model, report = train(tr, PredictorConfig(train=TrainConfig(epochs=3)), seed=4)
    ev = evaluate(model, te)
    blob = b"".join(net.params[k].tobytes() for net in (model.net1, model.net2) for k in net.params)
    preds = b"".join(c.flat().tobytes() for c in model.predict_samples(te))
    return blob, preds, report.epochs, ev.to_json()


def test_criterion_11_determinism():
    first, second = _replay(), _replay()
    same = [a == b for a, b in zip(first, second)]
    check(11, all(same), "two train/evaluate replays: parameters, predictions, epoch log and "
                         f"evaluation {'identical' if all(same) else 'differ'}")
