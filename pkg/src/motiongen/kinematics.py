"""Forward kinematics over the canonical skeleton tree."""

from __future__ import annotations

import numpy as np

from .rotations import identity_quat, quat_apply, quat_multiply, quat_normalize
from .skeleton import SkeletonSpec


def expand_rotations(skeleton: SkeletonSpec, rotations: np.ndarray) -> np.ndarray:
    """Scatter rotated-joint quaternions (..., N', 4) to all joints (..., N, 4),
    identity elsewhere."""
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape[-2] != skeleton.rotated_count:
        raise ValueError(
            f"expected {skeleton.rotated_count} rotations, got {rotations.shape[-2]}")
    full = np.broadcast_to(identity_quat(), rotations.shape[:-2] + (skeleton.joint_count, 4)).copy()
    full[..., list(skeleton.rotated_joints), :] = rotations
    return full


def forward_kinematics(skeleton: SkeletonSpec, root_translation: np.ndarray,
                       rotations: np.ndarray,
                       return_orientations: bool = False):
    """World joint positions from root translation and local rotations.

    root_translation: (..., 3); rotations: (..., N', 4) quaternions indexed by
    skeleton.rotated_joints (non-rotated joints are identity). Returns
    positions (..., N, 3), plus world orientations (..., N, 4) when requested.
    """
    root_translation = np.asarray(root_translation, dtype=np.float64)
    local = expand_rotations(skeleton, rotations)
    batch = local.shape[:-2]
    n = skeleton.joint_count

    positions = np.zeros(batch + (n, 3), dtype=np.float64)
    orientations = np.zeros(batch + (n, 4), dtype=np.float64)
    positions[..., 0, :] = root_translation
    orientations[..., 0, :] = quat_normalize(local[..., 0, :])

    for j in range(1, n):
        p = skeleton.parent_index[j]
        orientations[..., j, :] = quat_multiply(orientations[..., p, :], local[..., j, :])
        positions[..., j, :] = positions[..., p, :] + quat_apply(
            orientations[..., p, :], skeleton.rest_offsets[j])

    if return_orientations:
        return positions, quat_normalize(orientations)
    return positions


def rest_positions(skeleton: SkeletonSpec) -> np.ndarray:
    """Joint positions of the zero pose (identity rotations, zero root)."""
    ident = np.broadcast_to(identity_quat(), (skeleton.rotated_count, 4))
    return forward_kinematics(skeleton, np.zeros(3), ident)
