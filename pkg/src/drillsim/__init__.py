"""drillsim: deterministic volumetric-drilling simulation and synthetic
vision-data generation (stereo color, metric depth, segmentation, labeled
point clouds, ground-truth poses), with topic streaming/recording and
evaluation utilities for external pose/depth estimators."""

__version__ = "0.1.0"

from .pose import Pose
from .camera import CameraModel, Frustum, StereoRig

__all__ = ["Pose", "CameraModel", "Frustum", "StereoRig", "__version__"]
