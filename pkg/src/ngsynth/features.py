"""Kinematic descriptors of a clip, fused into one fixed-order feature row."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bvh import MotionClip, Skeleton
from .motion import TooFewFrames, forward_kinematics, unwrap_angles

FEATURE_NAMES = (
    "velocity_mean",
    "acceleration_mean",
    "jerk_mean",
    "angular_velocity_mean",
    "range_of_motion",
    "spatial_path",
    "harmonics_magnitude",
)
HARMONIC_BAND = (1, 5)
MIN_FRAMES = 8


@dataclass
class FeatureVector:
    values: np.ndarray
    label: str = "other"
    provenance: str = "real"
    source_id: str = ""

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(FEATURE_NAMES, self.values)}


def _positions(positions) -> np.ndarray:
    return getattr(positions, "positions", positions)


def _need(n_frames: int, minimum: int, what: str) -> None:
    if n_frames < minimum:
        raise TooFewFrames(f"{what} needs at least {minimum} frames, got {n_frames}")


def velocity(positions, frame_time: float) -> np.ndarray:
    """Per-frame, per-joint speed, shape (F-1, J)."""
    p = _positions(positions)
    _need(p.shape[0], 2, "velocity")
    return np.linalg.norm(np.diff(p, n=1, axis=0), axis=2) / frame_time


def acceleration(positions, frame_time: float) -> np.ndarray:
    """Magnitude of the second forward difference, shape (F-2, J)."""
    p = _positions(positions)
    _need(p.shape[0], 3, "acceleration")
    return np.linalg.norm(np.diff(p, n=2, axis=0), axis=2) / frame_time**2


def jerk(positions, frame_time: float) -> np.ndarray:
    """Magnitude of the third forward difference, shape (F-3, J)."""
    p = _positions(positions)
    _need(p.shape[0], 4, "jerk")
    return np.linalg.norm(np.diff(p, n=3, axis=0), axis=2) / frame_time**3


def _rotation_block(clip: MotionClip, rotation_columns) -> np.ndarray:
    if rotation_columns is None:
        return clip.frames
    return clip.frames[:, list(rotation_columns)]


def angular_velocity(clip: MotionClip, frame_time: float, rotation_columns=None) -> np.ndarray:
    """|delta angle| / frame_time per rotation channel, degrees per second.

    Expects unwrapped angles. ``rotation_columns=None`` treats every column
    as a rotation channel.
    """
    _need(clip.n_frames, 2, "angular_velocity")
    return np.abs(np.diff(_rotation_block(clip, rotation_columns), axis=0)) / frame_time


def range_of_motion(clip: MotionClip, rotation_columns=None) -> float:
    rot = _rotation_block(clip, rotation_columns)
    if rot.shape[1] == 0:
        return 0.0
    return float(np.mean(rot.max(axis=0) - rot.min(axis=0)))


def spatial_path(positions) -> float:
    """Mean over joints of total trajectory arc length."""
    p = _positions(positions)
    _need(p.shape[0], 2, "spatial_path")
    seg = np.linalg.norm(np.diff(p, axis=0), axis=2)
    return float(seg.sum(axis=0).mean())


def harmonics_magnitude(clip: MotionClip, rotation_columns=None) -> float:
    """Mean normalized DFT magnitude of harmonics 1..5 over rotation channels."""
    _need(clip.n_frames, MIN_FRAMES, "harmonics_magnitude")
    rot = _rotation_block(clip, rotation_columns)
    if rot.shape[1] == 0:
        return 0.0
    F = rot.shape[0]
    spectrum = np.abs(np.fft.rfft(rot - rot.mean(axis=0), axis=0)) / F
    lo, hi = HARMONIC_BAND
    return float(spectrum[lo:hi + 1].mean(axis=0).mean())


def extract_features(skeleton: Skeleton, clip: MotionClip) -> FeatureVector:
    _need(clip.n_frames, MIN_FRAMES, "extract_features")
    clip = unwrap_angles(clip, skeleton)
    pos = forward_kinematics(skeleton, clip).positions
    ft = clip.frame_time
    rot_cols = skeleton.rotation_columns()
    ang = angular_velocity(clip, ft, rot_cols)
    values = np.array([
        velocity(pos, ft).mean(),
        acceleration(pos, ft).mean(),
        jerk(pos, ft).mean(),
        ang.mean() if ang.size else 0.0,
        range_of_motion(clip, rot_cols),
        spatial_path(pos),
        harmonics_magnitude(clip, rot_cols),
    ])
    return FeatureVector(values=values, label=clip.label, provenance=clip.provenance,
                         source_id=clip.source_id)


def feature_matrix(vectors) -> np.ndarray:
    return np.vstack([v.values for v in vectors]) if vectors else np.empty((0, len(FEATURE_NAMES)))


def features_csv_text(vectors) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*FEATURE_NAMES, "label", "provenance", "source_id"])
    for v in vectors:
        w.writerow([*(repr(float(x)) for x in v.values), v.label, v.provenance, v.source_id])
    return buf.getvalue()


def write_feature_csv(path, vectors) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(features_csv_text(vectors))


def read_feature_csv(path) -> list[FeatureVector]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(FeatureVector(
                values=np.array([float(row[n]) for n in FEATURE_NAMES]),
                label=row["label"], provenance=row["provenance"], source_id=row.get("source_id", ""),
            ))
    return out
