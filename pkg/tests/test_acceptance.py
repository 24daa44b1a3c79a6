"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Set NGSYNTH_BVH_DIR to a directory of real full-body BVH files to include
them in the round-trip check.
"""

import filecmp
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from ngsynth.bvh import MotionClip, parse_bvh, write_bvh
from ngsynth.classify import (
    ForestConfig,
    classification_metrics,
    feature_importance,
    monte_carlo_cv,
    train_forest,
)
from ngsynth.cli import EXIT_OK, main
from ngsynth.features import FeatureVector, acceleration, extract_features, jerk
from ngsynth.metrics import diversity, dtw, fid, mpjpe
from ngsynth.motion import fit_standardization, standardize
from ngsynth.ngn import TrainConfig, generate_dataset, rank_neurons, train, update_step
from ngsynth.pipeline import PipelineConfig, run_in_memory
from ngsynth.toy import toy_corpus, toy_entries, write_toy_corpus

from conftest import full_body_skeleton, random_motion

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return emit


def _same_tree(a, b) -> bool:
    return [(j.name, j.offset, tuple(j.channels), j.is_end_site) for j in a.joints] == \
        [(j.name, j.offset, tuple(j.channels), j.is_end_site) for j in b.joints]


def test_criterion_1_bvh_round_trip(report, three_joint_text):
    t0 = time.perf_counter()
    texts = [("fixture", three_joint_text)]
    skel = full_body_skeleton()
    texts.append(("full body", write_bvh(skel, random_motion(skel, 120, seed=2))))
    user_dir = os.environ.get("NGSYNTH_BVH_DIR")
    if user_dir:
        texts += [(str(p), p.read_text()) for p in sorted(Path(user_dir).rglob("*.bvh"))]
    worst, tree_ok = 0.0, True
    for _, text in texts:
        s1, c1 = parse_bvh(text)
        s2, c2 = parse_bvh(write_bvh(s1, c1))
        tree_ok &= _same_tree(s1, s2) and c1.frames.shape == c2.frames.shape
        worst = max(worst, float(np.max(np.abs(c1.frames - c2.frames))), abs(c1.frame_time - c2.frame_time))
    elapsed = time.perf_counter() - t0
    ok = tree_ok and worst <= 1e-4 and elapsed < 1.0
    assert report(1, ok, f"{len(texts)} files, max |diff| {worst:.2e} (tol 1e-4), "
                         f"hierarchy identical {tree_ok}, {elapsed:.3f} s (< 1 s)")


def test_criterion_2_ngn_convergence(report):
    t0 = time.perf_counter()
    ratios, increases = {}, {}
    for label, clips in toy_corpus(0).items():
        model = fit_standardization(clips)
        fld = train([standardize(c, model) for c in clips], TrainConfig(seed=0), label, model)
        h = np.asarray(fld.error_history)
        ratios[label] = h[-1] / h[0]
        increases[label] = float(np.max(np.diff(h[3:]), initial=0.0))
    elapsed = time.perf_counter() - t0
    ratio_ok = all(r <= 0.3 for r in ratios.values())
    mono_ok = all(d <= 1e-6 for d in increases.values())
    detail = ", ".join(f"{k} final/first {ratios[k]:.3f} max rise {increases[k]:.2e}" for k in ratios)
    ok = ratio_ok and mono_ok and elapsed < 10
    assert report(2, ok, f"{detail}; ratio <= 0.3 {ratio_ok}, non-increasing after 3 (tol 1e-6) "
                         f"{mono_ok}, {elapsed:.1f} s (< 10 s)")


def _lloyd(x, centers, iters=100):
    c = np.array(centers, dtype=float)
    for _ in range(iters):
        assign = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
        c = np.array([x[assign == k].mean() for k in range(len(c))])
    return np.sort(c)


def test_criterion_3_quantization_oracle(report):
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(0, 1, 200), rng.normal(100, 1, 200)])
    clip = MotionClip(frame_time=1.0, frames=x[:, None])
    fld = train([clip], TrainConfig(neuron_count=2, iterations=50, seed=0))
    learned = np.sort(fld.weights[:, 0])
    oracle = _lloyd(x, [x.min(), x.max()])
    gap = float(np.max(np.abs(learned - oracle)))
    assert report(3, gap <= 1.0, f"neurons {learned.round(3)} vs k-means {oracle.round(3)}, "
                                 f"max gap {gap:.3f} (tol 1.0)")


def test_criterion_4_rank_and_update_oracles(report):
    rng = np.random.default_rng(4)
    mismatches = 0
    for trial in range(1000):
        n, c = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        if trial % 2:
            W = rng.integers(-2, 3, size=(n, c)).astype(float)
            v = rng.integers(-2, 3, size=c).astype(float)
        else:
            W, v = rng.normal(size=(n, c)), rng.normal(size=c)
        d = [math.dist(v, w) for w in W]
        oracle = [sum(1 for j in range(n) if d[j] < d[i]) for i in range(n)]
        mismatches += not np.array_equal(rank_neurons(v, W), oracle)
    half = update_step(np.array([[0.0]]), np.array([1.0]), 0.5, 1.0)[0, 0]
    pair = update_step(np.array([[0.0], [10.0]]), np.array([0.0]), 1.0, 1.0)[:, 0]
    upd_err = max(abs(half - 0.5), abs(pair[0] - 0.0), abs(pair[1] - (10.0 - 10.0 * math.exp(-1))))
    ok = mismatches == 0 and upd_err <= 1e-12
    assert report(4, ok, f"rank mismatches {mismatches}/1000, update max error {upd_err:.1e} (tol 1e-12)")


def _all_paths(n, m):
    def walk(i, j, path):
        if (i, j) == (n - 1, m - 1):
            yield path
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                yield from walk(i + di, j + dj, path + [(i + di, j + dj)])
    yield from walk(0, 0, [(0, 0)])


def test_criterion_5_metric_identities(report):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 7))
    fid_self = fid(X, X)
    def closed(a, b):
        return (np.mean(a) - np.mean(b)) ** 2 + (np.std(a) - np.std(b)) ** 2

    # (mu 0, sigma 1) vs (mu 1, sigma 1), and sigma 1 vs sigma 2
    pairs = [([-1.0, 1.0], [0.0, 2.0]), ([-1.0, 1.0], [-2.0, 2.0]),
             (rng.normal(0.0, 1.0, 400), rng.normal(3.0, 1.5, 300))]
    fid_1d_err = max(abs(fid(a, b) - closed(a, b)) for a, b in pairs)
    # the 1e-6 covariance ridge biases the result by about 1e-6 (s1 - s2)^2 / (s1 s2)
    wa, wb = rng.normal(1.0, 2.0, 500), rng.normal(-0.5, 0.7, 300)
    wide_err = abs(fid(wa, wb) - closed(wa, wb))
    wide_bias = 1e-6 * (wa.std() - wb.std()) ** 2 / (wa.std() * wb.std())
    s = rng.normal(size=(12, 3))
    dtw_self = dtw(s, s)
    worst = 0.0
    for _ in range(200):
        n, m, c = (int(v) for v in rng.integers(1, 7, size=3))
        p, q = rng.normal(size=(n, c)), rng.normal(size=(m, c))
        brute = min(sum(math.dist(p[i], q[j]) for i, j in path) for path in _all_paths(n, m))
        worst = max(worst, abs(dtw(p, q) - brute))
    pos = rng.integers(-50, 50, size=(6, 5, 3)).astype(float)
    mp = mpjpe(pos, pos + [3.0, 4.0, 0.0])
    div = diversity([0.0, 1.0, 2.0])
    ok = (fid_self <= 1e-6 and fid_1d_err <= 1e-6 and abs(wide_err - wide_bias) <= 1e-8
          and dtw_self == 0 and worst <= 1e-9
          and mp == 5.0 and abs(div - 4 / 3) <= 1e-15)
    assert report(5, ok, f"fid(X,X) {fid_self:.1e}, 1-D fid error {fid_1d_err:.1e} (tol 1e-6; "
                         f"sigma ratio {wa.std() / wb.std():.1f} case {wide_err:.2e} = ridge bias {wide_bias:.2e}), dtw(s,s) {dtw_self}, "
                         f"dtw vs brute force max error {worst:.1e} over 200, mpjpe {mp!r}, "
                         f"diversity {div!r}")


def test_criterion_6_feature_oracles(report):
    f = np.arange(10.0)

    def track(x):
        z = np.zeros_like(x)
        return np.stack([x, z, z], axis=1)[:, None, :]

    acc2 = float(np.max(np.abs(acceleration(track(f ** 2), 1.0) - 2.0)))
    jerk0 = float(np.max(np.abs(jerk(track(f ** 2), 1.0))))
    jerk6 = float(np.max(np.abs(jerk(track(f ** 3), 1.0) - 6.0)))
    scaling = 0.0
    for seed in range(10):
        skel = full_body_skeleton(seed)
        clip = random_motion(skel, 12, seed=seed, frame_time=0.04)
        a = extract_features(skel, clip)
        b = extract_features(skel, clip.replace(frame_time=0.02))
        for name, k in (("velocity_mean", 2), ("acceleration_mean", 4), ("jerk_mean", 8)):
            scaling = max(scaling, abs(b[name] - k * a[name]) / max(1.0, abs(b[name])))
    skel = full_body_skeleton()
    frozen = extract_features(skel, MotionClip(frame_time=1 / 60, frames=np.zeros((10, skel.total_channels))))
    frozen_ok = isinstance(frozen, FeatureVector) and bool(np.all(frozen.values == 0))
    ok = acc2 <= 1e-9 and jerk0 <= 1e-9 and jerk6 <= 1e-9 and scaling <= 1e-9 and frozen_ok
    assert report(6, ok, f"acc error {acc2:.1e}, jerk(quadratic) {jerk0:.1e}, jerk(cubic) error {jerk6:.1e}, "
                         f"scaling law max relative error {scaling:.1e} (tol 1e-9), frozen all-zero {frozen_ok}")


def test_criterion_7_classifier(report):
    rng = np.random.default_rng(7)
    centers = rng.normal(0, 8, size=(3, 4))
    n = [67, 67, 66]
    X = np.vstack([c + rng.normal(size=(k, 4)) for c, k in zip(centers, n)])
    y = np.repeat(np.array(["a", "b", "c"]), n)
    acc = monte_carlo_cv(X, y, runs=20, seed=0).mean()["accuracy"]

    m = 300
    ys = rng.integers(0, 2, m)
    Xs = rng.normal(size=(m, 5))
    Xs[:, 0] = ys * 3.0 + rng.normal(0, 0.5, m)
    imp = feature_importance(train_forest(Xs, ys, ForestConfig(seed=0)))

    perfect = classification_metrics(np.diag([5, 7, 6]))["mcc"]
    degenerate = classification_metrics(np.array([[5, 0], [5, 0]]))["mcc"]
    ok = acc >= 0.95 and abs(imp.sum() - 1) <= 1e-9 and imp[0] > 0.5 and perfect == 1 and degenerate == 0
    assert report(7, ok, f"blob accuracy {acc:.4f} (>= 0.95), importance sum {imp.sum():.12f}, "
                         f"informative share {imp[0]:.3f} (> 0.5), mcc perfect {perfect}, degenerate {degenerate}")


@pytest.mark.slow
def test_criterion_8_trend_replication(report):
    t0 = time.perf_counter()
    wins, rows = 0, []
    for seed in range(20):
        cfg = PipelineConfig(target_frames=300, seed=seed, holdout_per_class=2,
                             train=TrainConfig(samples_per_class=10))
        reports, _, _ = run_in_memory(toy_entries(seed), cfg)
        base, both = reports["base"].cv_mean["accuracy"], reports["syn+base"].cv_mean["accuracy"]
        wins += both >= base
        rows.append(f"{seed}:{base:.3f}/{both:.3f}")
    elapsed = time.perf_counter() - t0
    ok = wins >= 15 and elapsed < 300
    assert report(8, ok, f"Syn+Base >= Base in {wins}/20 (>= 15), {elapsed:.0f} s (< 300 s); "
                         f"seed:base/syn+base {' '.join(rows)}")


@pytest.mark.slow
def test_criterion_9_generation_speed(report):
    skel = full_body_skeleton()
    labels = ("angry", "depressed", "neutral", "proud")
    fields, refs = {}, {}
    for ci, label in enumerate(labels):
        clips = [random_motion(skel, 3000, seed=10 * ci + k).replace(label=label, source_id=f"{label}{k}")
                 for k in range(2)]
        model = fit_standardization(clips)
        std = [standardize(c, model) for c in clips]
        fields[label] = train(std, TrainConfig(seed=ci, iterations=5), label, model)
        refs[label] = std
    t0 = time.perf_counter()
    clips = generate_dataset(fields, refs, 10, seed=0)
    elapsed = time.perf_counter() - t0
    shapes_ok = len(clips) == 40 and all(c.frames.shape == (3000, 87) for c in clips)
    ok = shapes_ok and elapsed < 300
    assert report(9, ok, f"{len(clips)} clips of 3000 x 87 generated in {elapsed:.2f} s (< 300 s)")


def _tree_identical(a: Path, b: Path) -> bool:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if fa != fb:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(p) for p in fa], shallow=False)
    return not mismatch and not errors


@pytest.mark.slow
def test_criterion_10_determinism(report, tmp_path):
    data = write_toy_corpus(tmp_path / "data")
    for name in ("a", "b"):
        assert main(["pipeline", "--input", str(data), "--out", str(tmp_path / name), "--seed", "3"]) == EXIT_OK
    files = sum(1 for p in (tmp_path / "a").rglob("*") if p.is_file())
    ok = _tree_identical(tmp_path / "a", tmp_path / "b")
    assert report(10, ok, f"two pipeline runs, {files} files, byte-identical {ok}")
