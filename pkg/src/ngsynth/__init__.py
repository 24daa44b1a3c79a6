"""Neural gas synthesis of emotion-labelled BVH body motion, with kinematic
feature extraction and generative / classification evaluation."""

from .bvh import Joint, MotionClip, Skeleton, parse_bvh, read_bvh, validate, write_bvh
from .ngn import NeuronField, TrainConfig, generate_clip, generate_dataset, train

__version__ = "0.1.0"

__all__ = [
    "Joint", "MotionClip", "Skeleton", "parse_bvh", "read_bvh", "validate", "write_bvh",
    "NeuronField", "TrainConfig", "generate_clip", "generate_dataset", "train",
]
