"""Motion pre/post-processing: resampling, unwrapping, standardization,
Gaussian smoothing and forward kinematics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .bvh import MotionClip, Skeleton

STD_FLOOR = 1e-8
DEFAULT_TARGET_FRAMES = 3000
DEFAULT_SMOOTHING_SIGMA = 2.0


class TooFewFrames(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class MixedChannelCounts(ValueError):
    pass


def resample(clip: MotionClip, target_frames: int) -> MotionClip:
    """Linearly interpolate every channel onto ``target_frames`` evenly spaced
    samples of normalized time. The sampled time span is preserved."""
    F = clip.n_frames
    if F < 2 or target_frames < 2:
        raise TooFewFrames(f"resample needs >= 2 frames in and out (got {F} -> {target_frames})")
    src = np.linspace(0.0, 1.0, F)
    dst = np.linspace(0.0, 1.0, target_frames)
    out = np.empty((target_frames, clip.n_channels))
    for c in range(clip.n_channels):
        out[:, c] = np.interp(dst, src, clip.frames[:, c])
    frame_time = clip.frame_time * (F - 1) / (target_frames - 1)
    return clip.replace(frames=out, frame_time=frame_time)


def unwrap_angles(clip: MotionClip, skeleton: Skeleton) -> MotionClip:
    """Unwrap rotation channels so consecutive frames differ by < 180 degrees."""
    cols = skeleton.rotation_columns()
    if not cols or clip.n_frames < 2:
        return clip
    frames = clip.frames.copy()
    frames[:, cols] = np.unwrap(frames[:, cols], period=360.0, axis=0)
    return clip.replace(frames=frames)


@dataclass
class StandardizationModel:
    mean: np.ndarray
    std: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationModel":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def fit_standardization(clips) -> StandardizationModel:
    """Per-column mean and population std over all frames of all clips."""
    clips = list(clips)
    if not clips or sum(c.n_frames for c in clips) == 0:
        raise EmptyInput("no frames to fit standardization on")
    widths = {c.n_channels for c in clips}
    if len(widths) != 1:
        raise MixedChannelCounts(f"clips disagree on channel count: {sorted(widths)}")
    data = np.vstack([c.frames for c in clips])
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), STD_FLOOR)
    return StandardizationModel(mean=mean, std=std)


def _check_width(clip: MotionClip, model: StandardizationModel) -> None:
    if clip.n_channels != model.n_channels:
        raise MixedChannelCounts(
            f"clip has {clip.n_channels} channels, model has {model.n_channels}"
        )


def standardize(clip: MotionClip, model: StandardizationModel) -> MotionClip:
    _check_width(clip, model)
    return clip.replace(frames=(clip.frames - model.mean) / model.std)


def inverse_standardize(clip: MotionClip, model: StandardizationModel) -> MotionClip:
    _check_width(clip, model)
    return clip.replace(frames=clip.frames * model.std + model.mean)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=float)
    with np.errstate(over="ignore"):  # tiny sigma: off-centre weights underflow to 0
        return np.exp(-0.5 * (k / sigma) ** 2)


def gaussian_smooth(clip: MotionClip, sigma_frames: float) -> MotionClip:
    """Smooth each channel with a truncated Gaussian (radius ceil(3*sigma)).

    Near the clip ends the kernel is cut off and renormalized over the
    samples that exist, so no padding values leak in.
    """
    if sigma_frames < 0:
        raise ValueError("sigma_frames must be >= 0")
    if sigma_frames == 0:
        return clip.replace(frames=clip.frames.copy())
    w = gaussian_kernel(sigma_frames)
    num = correlate1d(clip.frames, w, axis=0, mode="constant", cval=0.0)
    den = correlate1d(np.ones(clip.n_frames), w, mode="constant", cval=0.0)
    return clip.replace(frames=num / den[:, None])


def _axis_rotation(axis: str, degrees: np.ndarray) -> np.ndarray:
    """Stack of 3x3 right-handed rotation matrices about one axis."""
    t = np.radians(degrees)
    c, s = np.cos(t), np.sin(t)
    one, zero = np.ones_like(t), np.zeros_like(t)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass
class JointPositions:
    positions: np.ndarray  # (F, J, 3)
    joint_names: list[str]

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "joint", "x", "y", "z"])
            for f in range(self.n_frames):
                for j, name in enumerate(self.joint_names):
                    x, y, z = self.positions[f, j]
                    w.writerow([f, name, repr(float(x)), repr(float(y)), repr(float(z))])


def forward_kinematics(skeleton: Skeleton, clip: MotionClip) -> JointPositions:
    """World-space joint positions for every frame.

    Each joint's local transform is its offset plus any position channels,
    followed by its rotation channels composed intrinsically in the declared
    order (degrees).
    """
    if clip.n_channels != skeleton.total_channels:
        raise MixedChannelCounts(
            f"clip has {clip.n_channels} channels, skeleton has {skeleton.total_channels}"
        )
    F = clip.n_frames
    J = len(skeleton.joints)
    pos = np.zeros((F, J, 3))
    identity = np.broadcast_to(np.eye(3), (F, 3, 3))
    index_of = {id(j): i for i, j in enumerate(skeleton.joints)}

    def visit(joint, parent_rot, parent_pos):
        i = index_of[id(joint)]
        start = skeleton.joint_index[i][1]
        local_t = np.broadcast_to(np.asarray(joint.offset, dtype=float), (F, 3)).copy()
        local_r = identity
        for k, ch in enumerate(joint.channels):
            values = clip.frames[:, start + k]
            axis = ch[0]
            if ch.endswith("position"):
                local_t[:, "XYZ".index(axis)] += values
            else:
                local_r = local_r @ _axis_rotation(axis, values)
        world_pos = parent_pos + np.einsum("fij,fj->fi", parent_rot, local_t)
        world_rot = parent_rot @ local_r
        pos[:, i] = world_pos
        for child in joint.children:
            visit(child, world_rot, world_pos)

    visit(skeleton.root, identity, np.zeros((F, 3)))
    return JointPositions(positions=pos, joint_names=skeleton.joint_names)
