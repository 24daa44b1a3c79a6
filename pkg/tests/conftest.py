import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

from ngsynth.bvh import Joint, MotionClip, Skeleton, write_bvh

THREE_JOINT_BVH = """HIERARCHY
ROOT Hips
{
  OFFSET 0.0 0.0 0.0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0.0 10.0 0.0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0.0 5.0 0.0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.0166667
0 0 0 0 0 0 0 0 0
0 0 0 0 0 0 0 0 0
"""

# 28 joints with channels: root (6) + 27 rotation-only joints (3 each) = 87
_BODY = {
    "Hips": ["Spine", "LeftUpLeg", "RightUpLeg"],
    "Spine": ["Spine1"],
    "Spine1": ["Spine2"],
    "Spine2": ["Neck", "LeftShoulder", "RightShoulder"],
    "Neck": ["Neck1"],
    "Neck1": ["Head"],
    "Head": [],
    "LeftShoulder": ["LeftArm"],
    "LeftArm": ["LeftForeArm"],
    "LeftForeArm": ["LeftHand"],
    "LeftHand": ["LeftHandEnd"],
    "LeftHandEnd": [],
    "RightShoulder": ["RightArm"],
    "RightArm": ["RightForeArm"],
    "RightForeArm": ["RightHand"],
    "RightHand": ["RightHandEnd"],
    "RightHandEnd": [],
    "LeftUpLeg": ["LeftLeg"],
    "LeftLeg": ["LeftFoot"],
    "LeftFoot": ["LeftToeBase"],
    "LeftToeBase": ["LeftToeEnd"],
    "LeftToeEnd": [],
    "RightUpLeg": ["RightLeg"],
    "RightLeg": ["RightFoot"],
    "RightFoot": ["RightToeBase"],
    "RightToeBase": ["RightToeEnd"],
    "RightToeEnd": [],
    "Pelvis": [],
}
_BODY["Hips"].append("Pelvis")


def _body_joint(name: str, rng) -> Joint:
    offset = tuple(float(x) for x in np.round(rng.uniform(-15, 15, size=3), 4))
    children = [_body_joint(c, rng) for c in _BODY[name]]
    if not children:
        children = [Joint(f"{name}_end", offset=(0.0, 3.0, 0.0), is_end_site=True)]
    if name == "Hips":
        return Joint(name, (0.0, 90.0, 0.0),
                     ["Xposition", "Yposition", "Zposition", "Zrotation", "Yrotation", "Xrotation"],
                     children)
    return Joint(name, offset, ["Zrotation", "Yrotation", "Xrotation"], children)


def full_body_skeleton(seed: int = 0) -> Skeleton:
    return Skeleton(_body_joint("Hips", np.random.default_rng(seed)))


def random_motion(skeleton: Skeleton, n_frames: int, seed: int = 0, frame_time: float = 1 / 60) -> MotionClip:
    rng = np.random.default_rng(seed)
    frames = rng.uniform(-180, 180, size=(n_frames, skeleton.total_channels))
    frames[:, skeleton.position_columns()] = rng.normal(0, 50, size=(n_frames, len(skeleton.position_columns())))
    return MotionClip(frame_time=frame_time, frames=frames)


@pytest.fixture
def three_joint_text():
    return THREE_JOINT_BVH


@pytest.fixture
def body_skeleton():
    return full_body_skeleton()


@pytest.fixture
def body_text(body_skeleton):
    return write_bvh(body_skeleton, random_motion(body_skeleton, 20, seed=1))


@pytest.fixture
def chain():
    """Root with XYZ position + ZXY rotation, one child at (0,1,0), an end site."""
    end = Joint("Tip_end", offset=(0.0, 1.0, 0.0), is_end_site=True)
    child = Joint("Tip", offset=(0.0, 1.0, 0.0), channels=["Zrotation", "Xrotation", "Yrotation"],
                  children=[end])
    root = Joint("Root", channels=["Xposition", "Yposition", "Zposition",
                                   "Zrotation", "Xrotation", "Yrotation"], children=[child])
    return Skeleton(root)
