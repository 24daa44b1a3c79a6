"""Neural gas network: rank-based vector quantization of motion frames and
frame-conditioned synthesis of new clips."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .bvh import MotionClip
from .motion import (
    EmptyInput,
    MixedChannelCounts,
    StandardizationModel,
    gaussian_smooth,
    inverse_standardize,
)

FIELD_FORMAT = "ngsynth.neuron_field"
FIELD_VERSION = 1


class InvalidBounds(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class NonPositiveRate(ValueError):
    pass


class MissingClass(KeyError):
    pass


@dataclass
class TrainConfig:
    neuron_count: int = 50
    iterations: int = 50
    epsilon_initial: float = 0.3
    epsilon_final: float = 0.05
    lambda_initial: float = 10.0
    lambda_final: float = 0.1
    noise_std: float = 3.0
    samples_per_class: int = 10
    smoothing_sigma: float = 2.0
    seed: int = 0
    convergence_tol: float = 1e-3
    noise_units: str = "raw"  # "raw" (channel units) or "standardized"

    def __post_init__(self):
        if self.neuron_count < 1 or self.iterations < 1:
            raise ValueError("neuron_count and iterations must be >= 1")
        if min(self.epsilon_initial, self.epsilon_final, self.lambda_initial, self.lambda_final) <= 0:
            raise NonPositiveRate("learning rate and neighborhood range must be positive")
        if self.epsilon_final > self.epsilon_initial or self.lambda_final > self.lambda_initial:
            raise ValueError("schedules must not increase")
        if self.noise_std < 0 or self.smoothing_sigma < 0:
            raise ValueError("noise_std and smoothing_sigma must be >= 0")
        if self.noise_units not in ("raw", "standardized"):
            raise ValueError(f"noise_units must be 'raw' or 'standardized', not {self.noise_units!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class NeuronField:
    weights: np.ndarray
    class_label: str
    config: TrainConfig
    error_history: list[float] = field(default_factory=list)
    converged_at: int | None = None
    standardization: StandardizationModel | None = None

    @property
    def n_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def n_channels(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> str:
        doc = {
            "format": FIELD_FORMAT,
            "version": FIELD_VERSION,
            "class_label": self.class_label,
            "config": asdict(self.config),
            "converged_at": self.converged_at,
            "error_history": [float(e) for e in self.error_history],
            "weights": self.weights.tolist(),
            "standardization": self.standardization.to_dict() if self.standardization else None,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NeuronField":
        doc = json.loads(text)
        if doc.get("format") != FIELD_FORMAT:
            raise ValueError("not a neuron field document")
        if doc.get("version") != FIELD_VERSION:
            raise ValueError(f"unsupported neuron field version {doc.get('version')!r}")
        std = doc.get("standardization")
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            class_label=doc["class_label"],
            config=TrainConfig.from_dict(doc["config"]),
            error_history=list(doc["error_history"]),
            converged_at=doc["converged_at"],
            standardization=StandardizationModel.from_dict(std) if std else None,
        )


def init_neurons(seed, n_neurons: int, n_channels: int, bounds) -> np.ndarray:
    """Uniform random weights inside the per-column ``(min, max)`` bounds.

    ``seed`` may be an int or an existing ``np.random.Generator``.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if n_neurons < 1 or n_channels < 1:
        raise InvalidBounds("need at least one neuron and one channel")
    if lo.shape != (n_channels,) or hi.shape != (n_channels,) or np.any(lo > hi):
        raise InvalidBounds("bounds must be per-column with min <= max")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(n_neurons, n_channels))


def frame_distance(v, w) -> float:
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.shape != w.shape:
        raise LengthMismatch(f"{v.shape} vs {w.shape}")
    return float(np.sqrt(np.sum((v - w) ** 2)))


def _sq_distances(v: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diff = weights - v
    return np.einsum("ij,ij->i", diff, diff)


def rank_neurons(v, weights) -> np.ndarray:
    """rank[i] = number of neurons strictly closer to ``v`` than neuron i."""
    weights = np.asarray(weights, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != v.shape[0]:
        raise LengthMismatch(f"frame of length {v.shape[0]} vs weights {weights.shape}")
    d = _sq_distances(v, weights)
    return np.searchsorted(np.sort(d), d, side="left")


def schedule(t: int, T: int, start: float, end: float) -> float:
    """Exponential decay from ``start`` at t=0 to ``end`` at t=T-1."""
    if start <= 0 or end <= 0:
        raise NonPositiveRate("schedule endpoints must be positive")
    if T <= 1:
        return float(start)
    if t == T - 1:
        return float(end)
    return float(start * (end / start) ** (t / (T - 1)))


def update_step(weights, v, epsilon: float, lam: float) -> np.ndarray:
    """Move every neuron toward ``v`` by ``epsilon * exp(-rank / lam)``."""
    if epsilon < 0 or lam <= 0:
        raise NonPositiveRate("epsilon must be >= 0 and lambda > 0")
    weights = np.asarray(weights, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ranks = rank_neurons(v, weights)
    h = epsilon * np.exp(-ranks / lam)
    return weights + h[:, None] * (v - weights)


@njit(cache=True)
def _epoch(weights, frames, order, epsilon, lam):
    # in-place equivalent of update_step applied to frames[order] in sequence
    N, C = weights.shape
    d = np.empty(N)
    for idx in order:
        v = frames[idx]
        for i in range(N):
            s = 0.0
            for c in range(C):
                diff = weights[i, c] - v[c]
                s += diff * diff
            d[i] = s
        srt = np.sort(d)
        for i in range(N):
            r = np.searchsorted(srt, d[i])
            h = epsilon * np.exp(-r / lam)
            for c in range(C):
                weights[i, c] = weights[i, c] + h * (v[c] - weights[i, c])


def _nearest(frames: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest neuron index (lowest index on ties) and its distance, per frame."""
    d = cdist(frames, weights)
    idx = np.argmin(d, axis=1)
    return idx, d[np.arange(len(frames)), idx]


def average_error(weights, frames) -> float:
    """Mean distance from each frame to its closest neuron."""
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0 or weights.shape[0] == 0:
        raise EmptyInput("average_error needs frames and neurons")
    if frames.shape[1] != weights.shape[1]:
        raise LengthMismatch(f"{frames.shape[1]} vs {weights.shape[1]} channels")
    return float(_nearest(frames, weights)[1].mean())


def _pool(clips) -> np.ndarray:
    clips = list(clips)
    if not clips:
        raise EmptyInput("no clips to train on")
    widths = {c.n_channels for c in clips}
    if len(widths) != 1:
        raise MixedChannelCounts(f"clips disagree on channel count: {sorted(widths)}")
    data = np.vstack([c.frames for c in clips])
    if data.shape[0] == 0:
        raise EmptyInput("no frames to train on")
    return np.ascontiguousarray(data)


def train(clips, config: TrainConfig, class_label: str | None = None,
          standardization: StandardizationModel | None = None) -> NeuronField:
    """Train one field on the pooled (already standardized) frames of one class.

    One iteration is a full pass over the pooled frames in a fresh random
    order. Training stops once the relative drop in average error between
    consecutive iterations falls below ``config.convergence_tol``.
    """
    clips = list(clips)
    data = _pool(clips)
    if class_label is None:
        class_label = clips[0].label
    rng = np.random.default_rng(config.seed)
    weights = init_neurons(rng, config.neuron_count, data.shape[1],
                           (data.min(axis=0), data.max(axis=0)))
    T = config.iterations
    history: list[float] = []
    converged_at = None
    for t in range(T):
        eps = schedule(t, T, config.epsilon_initial, config.epsilon_final)
        lam = schedule(t, T, config.lambda_initial, config.lambda_final)
        order = rng.permutation(data.shape[0])
        _epoch(weights, data, order, eps, lam)
        err = average_error(weights, data)
        history.append(err)
        if t > 0:
            prev = history[-2]
            improvement = (prev - err) / prev if prev > 0 else 0.0
            if 0 <= improvement < config.convergence_tol or prev == 0:
                converged_at = t
                break
    return NeuronField(
        weights=weights, class_label=class_label, config=config,
        error_history=history, converged_at=converged_at, standardization=standardization,
    )


def generate_frame(reference_frame, field: NeuronField, sigma, rng) -> np.ndarray:
    """Nearest neuron to ``reference_frame`` plus independent N(0, sigma^2) noise.

    ``sigma`` is a scalar or one value per channel.
    """
    ref = np.asarray(reference_frame, dtype=np.float64)
    if ref.shape != (field.n_channels,):
        raise LengthMismatch(f"frame of length {ref.shape} vs {field.n_channels} channels")
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be >= 0")
    idx, _ = _nearest(ref[None, :], field.weights)
    return field.weights[idx[0]] + sigma * rng.standard_normal(field.n_channels)


def noise_scale(field: NeuronField, config: TrainConfig):
    """Noise std in the field's (standardized) space, scalar or per channel.

    With ``noise_units="raw"`` the noise is ``noise_std`` in channel units
    (degrees / length) once the clip is mapped back out of standardized space.
    """
    if config.noise_units == "raw" and field.standardization is not None:
        return config.noise_std / field.standardization.std
    return config.noise_std


def generate_clip(reference: MotionClip, field: NeuronField, config: TrainConfig, rng,
                  source_id: str = "") -> MotionClip:
    """Synthesize one clip frame-by-frame from a standardized reference clip.

    Noise draws are consumed row by row, so the result equals calling
    ``generate_frame`` on each reference frame in order with the same rng.
    """
    if reference.n_channels != field.n_channels:
        raise MixedChannelCounts(
            f"reference has {reference.n_channels} channels, field has {field.n_channels}"
        )
    idx, _ = _nearest(reference.frames, field.weights)
    noise = noise_scale(field, config) * rng.standard_normal((reference.n_frames, field.n_channels))
    frames = field.weights[idx] + noise
    clip = reference.replace(
        frames=frames, label=field.class_label, provenance="synthetic",
        source_id=source_id, reference_id=reference.source_id,
    )
    clip = gaussian_smooth(clip, config.smoothing_sigma)
    if field.standardization is not None:
        clip = inverse_standardize(clip, field.standardization)
    return clip


def clip_rng(seed: int, class_index: int, clip_index: int) -> np.random.Generator:
    """Independent stream per (seed, class, clip) so generation can fan out."""
    return np.random.default_rng(np.random.SeedSequence([seed, class_index, clip_index]))


def generate_dataset(fields: dict, references: dict, n_per_class: int, seed: int = 0,
                     config: TrainConfig | None = None) -> list[MotionClip]:
    """``n_per_class`` clips per class, cycling round-robin over references.

    ``fields`` and ``references`` are keyed by class label; references must be
    standardized with the field's model. Classes are produced in ``fields`` order.
    """
    out = []
    for ci, label in enumerate(fields):
        refs = references.get(label) or []
        if not refs:
            raise MissingClass(f"no reference clips for class {label!r}")
        fld = fields[label]
        cfg = config or fld.config
        for k in range(n_per_class):
            ref = refs[k % len(refs)]
            out.append(generate_clip(ref, fld, cfg, clip_rng(seed, ci, k),
                                     source_id=f"{label}_syn{k:03d}"))
    return out
