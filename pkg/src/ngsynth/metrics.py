"""Population-level quality metrics for synthetic motion: FID on kinematic
features (FID-K), diversity, fidelity, DTW and MPJPE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist, pdist

COV_REGULARIZATION = 1e-6


class TooFewSamples(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        X = features
    else:
        features = list(features)
        if features and hasattr(features[0], "values"):
            X = np.vstack([f.values for f in features])
        else:
            X = np.asarray(features, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _labels(features, n: int) -> np.ndarray:
    if not isinstance(features, np.ndarray):
        features = list(features)
        if features and hasattr(features[0], "label"):
            return np.array([f.label for f in features])
    return np.array([""] * n)


@dataclass
class GaussianMoments:
    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    @classmethod
    def fit(cls, X: np.ndarray, regularization: float = COV_REGULARIZATION) -> "GaussianMoments":
        X = _as_matrix(X)
        mu = X.mean(axis=0)
        centered = X - mu
        cov = centered.T @ centered / X.shape[0]
        cov = 0.5 * (cov + cov.T) + regularization * np.eye(X.shape[1])
        return cls(mean=mu, covariance=cov, sample_count=X.shape[0])


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(S)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(m1: GaussianMoments, m2: GaussianMoments) -> float:
    root1 = _psd_sqrt(m1.covariance)
    inner = root1 @ m2.covariance @ root1
    eig = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    trace_sqrt = np.sqrt(np.clip(eig, 0.0, None)).sum()
    diff = m1.mean - m2.mean
    value = diff @ diff + np.trace(m1.covariance) + np.trace(m2.covariance) - 2.0 * trace_sqrt
    return float(max(value, 0.0))


def fid(real_features, synth_features) -> float:
    """Frechet distance between Gaussians fitted to two feature populations."""
    A, B = _as_matrix(real_features), _as_matrix(synth_features)
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise TooFewSamples("fid needs at least 2 samples per population")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} features")
    return frechet_distance(GaussianMoments.fit(A), GaussianMoments.fit(B))


def diversity(features) -> float:
    """Mean Euclidean distance over all unordered sample pairs."""
    X = _as_matrix(features)
    if X.shape[0] < 2:
        raise TooFewSamples("diversity needs at least 2 samples")
    return float(pdist(X).mean())


def fidelity(real_features, synth_features, real_labels=None, synth_labels=None) -> float:
    """Negative mean nearest-real distance (same class), scaled by the mean
    pairwise distance among real samples. 0 is best; more negative is worse.

    A synthetic sample whose class has no real counterpart is compared to
    every real sample.
    """
    A, B = _as_matrix(real_features), _as_matrix(synth_features)
    if A.shape[0] < 2 or B.shape[0] < 1:
        raise TooFewSamples("fidelity needs >= 2 real and >= 1 synthetic samples")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} features")
    ra = np.asarray(real_labels) if real_labels is not None else _labels(real_features, len(A))
    sb = np.asarray(synth_labels) if synth_labels is not None else _labels(synth_features, len(B))
    d = cdist(B, A)
    nearest = np.empty(len(B))
    for i in range(len(B)):
        same = ra == sb[i]
        nearest[i] = d[i, same].min() if same.any() else d[i].min()
    scale = pdist(A).mean()
    if scale == 0:
        return 0.0 if np.all(nearest == 0) else float("-inf")
    return float(-nearest.mean() / scale)


@njit(cache=True)
def _dtw_accumulate(cost):
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i - 1, j - 1] + best
    return acc[n, m]


def _as_sequence(a) -> np.ndarray:
    a = getattr(a, "frames", a)
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def dtw(a, b) -> float:
    """Unconstrained DTW cost with Euclidean frame cost and match/insert/delete steps."""
    A, B = _as_sequence(a), _as_sequence(b)
    if len(A) == 0 or len(B) == 0:
        raise EmptyInput("dtw needs non-empty sequences")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]} channels")
    return float(_dtw_accumulate(cdist(A, B)))


def dtw_population(real_clips, synth_clips, return_pairs: bool = False):
    """Mean DTW of each synthetic clip to its generation reference.

    The reference is found by ``reference_id`` among the real clips' source
    ids; otherwise the nearest real clip of the same class (by DTW) is used.
    With ``return_pairs`` also returns ``[(synth_id, real_id, value), ...]``.
    """
    real_clips, synth_clips = list(real_clips), list(synth_clips)
    if not real_clips or not synth_clips:
        raise EmptyInput("dtw_population needs real and synthetic clips")
    by_id = {c.source_id: c for c in real_clips}
    pairs = []
    for s in synth_clips:
        ref = by_id.get(getattr(s, "reference_id", ""))
        if ref is not None:
            pairs.append((s.source_id, ref.source_id, dtw(s, ref)))
            continue
        pool = [c for c in real_clips if c.label == s.label] or real_clips
        values = [dtw(s, c) for c in pool]
        k = int(np.argmin(values))
        pairs.append((s.source_id, pool[k].source_id, values[k]))
    mean = float(np.mean([p[2] for p in pairs]))
    return (mean, pairs) if return_pairs else mean


def mpjpe(a, b) -> float:
    """Mean per-joint position error between two (F, J, 3) position arrays."""
    A = np.asarray(getattr(a, "positions", a), dtype=np.float64)
    B = np.asarray(getattr(b, "positions", b), dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeMismatch(f"{A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B, axis=-1).mean())
