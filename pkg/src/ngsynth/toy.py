"""Small synthetic emotion corpus used by the tests, the acceptance suite and
the ``toy`` CLI subcommand.

Each clip is a 2-channel sinusoidal swing of a three-point chain. Classes
differ in tempo, amplitude and resting posture; angry clips also carry a
strong second harmonic, which makes them the most abrupt.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .bvh import Joint, MotionClip, Skeleton, write_bvh

CLASSES = ("angry", "depressed", "neutral", "proud")

# (amplitude_z, amplitude_x) degrees, frequency Hz, rest posture (z, x), 2nd-harmonic gain
_STYLE = {
    "angry": ((30.0, 20.0), 2.0, (0.0, 10.0), 0.3),
    "depressed": ((10.0, 8.0), 0.8, (-20.0, -15.0), 0.0),
    "neutral": ((15.0, 10.0), 1.5, (0.0, 0.0), 0.1),
    "proud": ((25.0, 15.0), 1.2, (10.0, 20.0), 0.2),
}
# within-class variation
AMP_JITTER = 0.05
FREQ_JITTER = 0.1
POSTURE_STD = 0.5
FRAME_NOISE_STD = 0.25
FRAME_NOISE_SMOOTHING = 2.0  # frames; capture jitter is low-pass, not white

FRAME_TIME = 1.0 / 60.0


def toy_skeleton() -> Skeleton:
    end = Joint("Arm_end", offset=(0.0, 5.0, 0.0), is_end_site=True)
    arm = Joint("Arm", offset=(0.0, 10.0, 0.0), channels=[], children=[end])
    root = Joint("Hips", offset=(0.0, 0.0, 0.0), channels=["Zrotation", "Xrotation"], children=[arm])
    return Skeleton(root)


def toy_clip(label: str, rng: np.random.Generator, n_frames: int = 300, index: int = 0) -> MotionClip:
    (amp_z, amp_x), freq, (rest_z, rest_x), h2 = _STYLE[label]
    t = np.arange(n_frames) * FRAME_TIME
    amp = np.array([amp_z, amp_x]) * rng.uniform(1 - AMP_JITTER, 1 + AMP_JITTER, size=2)
    f = freq * rng.uniform(1 - FREQ_JITTER, 1 + FREQ_JITTER)
    w = 2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)
    rest = np.array([rest_z, rest_x]) + rng.normal(0.0, POSTURE_STD, size=2)
    # x lags z by a quarter cycle, so every clip of a class traces the same loop
    base = np.stack([np.sin(w), np.cos(w)], axis=1)
    second = np.stack([np.sin(2 * w), np.cos(2 * w)], axis=1)
    frames = rest + amp * (base + h2 * second)
    jitter = gaussian_filter1d(rng.normal(0.0, 1.0, size=frames.shape), FRAME_NOISE_SMOOTHING, axis=0)
    frames += FRAME_NOISE_STD * jitter / jitter.std(axis=0)
    return MotionClip(frame_time=FRAME_TIME, frames=frames, label=label,
                      source_id=f"{label}_{index:02d}")


def toy_corpus(seed: int = 0, clips_per_class: int = 8, n_frames: int = 300) -> dict[str, list[MotionClip]]:
    """Return ``{label: [clip, ...]}`` for the four emotion classes."""
    rng = np.random.default_rng(seed)
    return {
        label: [toy_clip(label, rng, n_frames, i) for i in range(clips_per_class)]
        for label in CLASSES
    }


def write_toy_corpus(root, seed: int = 0, clips_per_class: int = 8, n_frames: int = 300) -> Path:
    """Write the corpus as ``root/<class>/<class>_NN.bvh``."""
    root = Path(root)
    skel = toy_skeleton()
    for label, clips in toy_corpus(seed, clips_per_class, n_frames).items():
        d = root / label
        d.mkdir(parents=True, exist_ok=True)
        for clip in clips:
            (d / f"{clip.source_id}.bvh").write_text(write_bvh(skel, clip))
    return root


def toy_entries(seed: int = 0, clips_per_class: int = 8, n_frames: int = 300) -> dict:
    """The corpus in the ``{class: [Entry, ...]}`` shape the pipeline stages take."""
    from .pipeline import Entry

    skel = toy_skeleton()
    return {
        label: [Entry(None, skel, c) for c in clips]
        for label, clips in toy_corpus(seed, clips_per_class, n_frames).items()
    }
