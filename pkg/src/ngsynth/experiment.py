"""Base / Syn / Syn+Base evaluation arms: features, population metrics and
Monte Carlo cross-validated random-forest scores per arm."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bvh import MotionClip, Skeleton
from .classify import ForestConfig, feature_importance, monte_carlo_cv, train_forest
from .features import FEATURE_NAMES, FeatureVector, extract_features, feature_matrix
from .metrics import diversity, dtw_population, fid, fidelity, mpjpe
from .motion import forward_kinematics, resample

ARMS = ("base", "syn", "syn+base")
FID_KIND = "FID-K (Gaussian moments of the 7 kinematic features)"


@dataclass
class EvalReport:
    arm: str
    sample_count: int
    class_counts: dict
    fid: float
    diversity_real: float
    diversity_synth: float
    fidelity: float
    dtw_mean: float | None
    mpjpe_mean: float | None
    cv_runs: int
    cv_mean: dict
    cv_std: dict
    feature_importance: dict
    per_run: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "sample_count": self.sample_count,
            "class_counts": dict(sorted(self.class_counts.items())),
            "accuracy": self.cv_mean["accuracy"],
            "std": self.cv_std["accuracy"],
            "precision": self.cv_mean["precision"],
            "recall": self.cv_mean["recall"],
            "f1": self.cv_mean["f1"],
            "mcc": self.cv_mean["mcc"],
            "precision_micro": self.cv_mean["precision_micro"],
            "recall_micro": self.cv_mean["recall_micro"],
            "f1_micro": self.cv_mean["f1_micro"],
            "diversity": self.diversity_synth,
            "diversity_real": self.diversity_real,
            "diversity_synth": self.diversity_synth,
            "fidelity": self.fidelity,
            "fid": self.fid,
            "fid_kind": FID_KIND,
            "dtw": self.dtw_mean,
            "mpjpe": self.mpjpe_mean,
            "cv_runs": self.cv_runs,
            "cv_mean": self.cv_mean,
            "cv_std": self.cv_std,
            "feature_importance": self.feature_importance,
        }


def _skeleton_for(skeletons, clip: MotionClip) -> Skeleton:
    if isinstance(skeletons, Skeleton):
        return skeletons
    return skeletons[clip.source_id]


def paired_errors(real_clips, synth_clips, skeletons) -> list[tuple[str, str, float, float]]:
    """``(synth_id, real_id, dtw, mpjpe)`` for every synthetic clip and its pair."""
    if not synth_clips:
        return []
    _, pairs = dtw_population(real_clips, synth_clips, return_pairs=True)
    by_id = {c.source_id: c for c in real_clips}
    out = []
    for s, (sid, rid, d) in zip(synth_clips, pairs):
        r = by_id[rid]
        if r.n_frames != s.n_frames:
            r = resample(r, s.n_frames)
        pa = forward_kinematics(_skeleton_for(skeletons, s), s)
        pb = forward_kinematics(_skeleton_for(skeletons, by_id[rid]), r)
        out.append((sid, rid, d, mpjpe(pa, pb)))
    return out


def _arm_report(arm, pool: list[FeatureVector], baseline: list[FeatureVector],
                pairs, runs, train_fraction, forest_config, seed) -> EvalReport:
    X = feature_matrix(pool)
    y = np.array([v.label for v in pool])
    cv = monte_carlo_cv(X, y, runs=runs, train_fraction=train_fraction,
                        forest_config=forest_config, seed=seed)
    forest = train_forest(X, y, ForestConfig(**{**forest_config.__dict__, "seed": seed}))
    importance = dict(zip(FEATURE_NAMES, (float(v) for v in feature_importance(forest))))
    synth_ids = {v.source_id for v in pool if v.provenance == "synthetic"}
    arm_pairs = [p for p in pairs if p[0] in synth_ids]
    return EvalReport(
        arm=arm,
        sample_count=len(pool),
        class_counts=dict(Counter(y.tolist())),
        fid=fid(baseline, pool),
        diversity_real=diversity(baseline),
        diversity_synth=diversity(pool),
        fidelity=fidelity(baseline, pool),
        dtw_mean=float(np.mean([p[2] for p in arm_pairs])) if arm_pairs else None,
        mpjpe_mean=float(np.mean([p[3] for p in arm_pairs])) if arm_pairs else None,
        cv_runs=cv.run_count,
        cv_mean=cv.mean(),
        cv_std=cv.std(),
        feature_importance=importance,
        per_run=cv.runs,
    )


def run_experiment_arms(baseline: list[MotionClip], synthetic: list[MotionClip], skeletons,
                        references: list[MotionClip] | None = None, *, runs: int = 20,
                        train_fraction: float = 0.7, forest_config: ForestConfig | None = None,
                        seed: int = 0, arms=ARMS, features: dict | None = None):
    """Evaluate each arm; returns ``(reports_by_arm, feature_vectors, pairs)``.

    ``skeletons`` is one shared Skeleton or a mapping source_id -> Skeleton.
    ``references`` are the real clips synthetic clips were generated from;
    they are used for DTW/MPJPE pairing only and never enter an arm.
    """
    if not baseline or not synthetic:
        raise ValueError("both the baseline and synthetic pools must be non-empty")
    if {c.label for c in baseline} != {c.label for c in synthetic}:
        raise ValueError("baseline and synthetic pools must share the same label set")
    forest_config = forest_config or ForestConfig()
    if features is None:
        features = {}
    for c in [*baseline, *synthetic]:
        if c.source_id not in features:
            features[c.source_id] = extract_features(_skeleton_for(skeletons, c), c)
    base_f = [features[c.source_id] for c in baseline]
    syn_f = [features[c.source_id] for c in synthetic]
    pairs = paired_errors([*(references or []), *baseline], synthetic, skeletons)
    pools = {"base": base_f, "syn": syn_f, "syn+base": [*syn_f, *base_f]}
    reports = {
        arm: _arm_report(arm, pools[arm], base_f, pairs, runs, train_fraction, forest_config, seed)
        for arm in arms
    }
    return reports, [*base_f, *syn_f], pairs
