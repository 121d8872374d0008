"""Multimodal whole-body motion generation toolkit."""

from .skeleton import SkeletonSpec, feature_dim, load_skeleton, save_skeleton
from .features import (
    FeatureLayout,
    GlobalMotion,
    MotionFeatures,
    detect_foot_contacts,
    extract_features,
    recover_motion,
)
from .kinematics import forward_kinematics
from .rotations import convert_rotation

__all__ = [
    "SkeletonSpec",
    "feature_dim",
    "load_skeleton",
    "save_skeleton",
    "FeatureLayout",
    "GlobalMotion",
    "MotionFeatures",
    "detect_foot_contacts",
    "extract_features",
    "recover_motion",
    "forward_kinematics",
    "convert_rotation",
    # deeper layers are imported lazily to keep `import motiongen` light:
    # motiongen.model, motiongen.diffusion, motiongen.curriculum,
    # motiongen.generate, motiongen.evaluation, motiongen.service
]

__version__ = "0.1.0"
