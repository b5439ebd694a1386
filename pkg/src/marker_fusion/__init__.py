"""Multi-fiducial object tracking with VIO loss-of-sight bridging and delay
compensation, plus a deterministic scenario simulator and evaluation tools."""

from .geom import Pose, PoseError, RansacConfig, Twist, average_poses, compose, inverse, pose_distance, ransac_poses
from .tracker import (
    Mode,
    TagDetection,
    TagMap,
    TrackerConfig,
    TrackerOutput,
    TrackerState,
    VioSample,
    VioStream,
    step,
    tag_init,
)

__all__ = [
    "Mode",
    "Pose",
    "PoseError",
    "RansacConfig",
    "TagDetection",
    "TagMap",
    "TrackerConfig",
    "TrackerOutput",
    "TrackerState",
    "Twist",
    "VioSample",
    "VioStream",
    "average_poses",
    "compose",
    "inverse",
    "pose_distance",
    "ransac_poses",
    "step",
    "tag_init",
]

__version__ = "0.1.0"
