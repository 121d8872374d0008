"""Per-frame motion feature tuple and its inverse.

Each frame packs, in order: yaw angular velocity (1), ground-plane root
linear velocity in the facing frame (2), root height (1), yaw-removed
root-centered positions of the non-root joints (3(N-1)), 6D local rotations
of the rotated joints (6N'), world-frame joint velocities (3N), four binary
foot contacts, and 100 face coefficients. Velocities are forward differences
in per-frame units; the final frame repeats the previous difference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .rotations import (
    matrix_to_quat,
    matrix_to_sixd,
    quat_apply,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    sixd_to_matrix,
    wrap_angle,
    yaw_quat,
    yaw_twist_split,
)
from .kinematics import forward_kinematics
from .skeleton import CONTACT_DIM, FACE_DIM, SkeletonSpec

logger = logging.getLogger(__name__)

DEFAULT_CONTACT_THRESHOLD = 0.002  # m/frame at 30 fps


@dataclass
class GlobalMotion:
    """World-frame motion: root path plus local rotations of rotated joints."""

    fps: float
    root_translation: np.ndarray        # (F, 3) meters
    local_rotations: np.ndarray         # (F, N', 4) unit quaternions
    face: np.ndarray | None = None      # (F, 100) coefficients

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)
        self.local_rotations = np.asarray(self.local_rotations, dtype=np.float64)
        if self.root_translation.ndim != 2 or self.root_translation.shape[1] != 3:
            raise ValueError("root_translation must have shape (F, 3)")
        if self.local_rotations.ndim != 3 or self.local_rotations.shape[2] != 4:
            raise ValueError("local_rotations must have shape (F, N', 4)")
        if self.local_rotations.shape[0] != self.frame_count:
            raise ValueError("frame counts of translations and rotations disagree")
        if self.frame_count < 1:
            raise ValueError("motion needs at least one frame")
        if self.face is not None:
            self.face = np.asarray(self.face, dtype=np.float64)
            if self.face.shape != (self.frame_count, FACE_DIM):
                raise ValueError(f"face must have shape (F, {FACE_DIM})")

    @property
    def frame_count(self) -> int:
        return self.root_translation.shape[0]

    def copy(self) -> "GlobalMotion":
        return GlobalMotion(self.fps, self.root_translation.copy(),
                            self.local_rotations.copy(),
                            None if self.face is None else self.face.copy())


class FeatureLayout:
    """Column bookkeeping for the per-frame feature vector of one skeleton."""

    def __init__(self, skeleton: SkeletonSpec):
        self.skeleton = skeleton
        n, nr = skeleton.joint_count, skeleton.rotated_count
        self.root = slice(0, 4)
        self.positions = slice(4, 4 + 3 * (n - 1))
        jr0 = 4 + 3 * (n - 1)
        self.rotations = slice(jr0, jr0 + 6 * nr)
        jv0 = jr0 + 6 * nr
        self.velocities = slice(jv0, jv0 + 3 * n)
        c0 = jv0 + 3 * n
        self.contacts = slice(c0, c0 + CONTACT_DIM)
        self.face = slice(c0 + CONTACT_DIM, c0 + CONTACT_DIM + FACE_DIM)
        self.dim = c0 + CONTACT_DIM + FACE_DIM
        assert self.dim == skeleton.feature_dim

    def position_slice(self, joint: int) -> slice:
        if joint == 0:
            raise ValueError("root has no position columns")
        base = self.positions.start + 3 * (joint - 1)
        return slice(base, base + 3)

    def rotation_slice(self, joint: int) -> slice | None:
        slot = self.skeleton.rotated_slot(joint)
        if slot is None:
            return None
        base = self.rotations.start + 6 * slot
        return slice(base, base + 6)

    def velocity_slice(self, joint: int) -> slice:
        base = self.velocities.start + 3 * joint
        return slice(base, base + 3)

    def joint_columns(self, joint: int) -> np.ndarray:
        """All feature columns owned by ``joint``. The root also owns the four
        root channels, the contact bits, and the face block."""
        cols: list[int] = []
        if joint == 0:
            cols.extend(range(self.root.start, self.root.stop))
        else:
            s = self.position_slice(joint)
            cols.extend(range(s.start, s.stop))
        r = self.rotation_slice(joint)
        if r is not None:
            cols.extend(range(r.start, r.stop))
        v = self.velocity_slice(joint)
        cols.extend(range(v.start, v.stop))
        if joint == 0:
            cols.extend(range(self.contacts.start, self.contacts.stop))
            cols.extend(range(self.face.start, self.face.stop))
        return np.asarray(cols, dtype=np.int64)

    def trajectory_columns(self) -> np.ndarray:
        """Columns steering the root path: the four root channels plus the
        root's world-velocity slice."""
        v = self.velocity_slice(0)
        return np.asarray(list(range(self.root.start, self.root.stop))
                          + list(range(v.start, v.stop)), dtype=np.int64)

    def part_columns(self) -> list[np.ndarray]:
        """Feature columns per body part; concatenation covers [0, D) exactly."""
        out = []
        for part in self.skeleton.body_parts:
            cols = np.concatenate([self.joint_columns(j) for j in part])
            out.append(np.sort(cols))
        return out

    def expand_joint_mask(self, mask: np.ndarray, root_columns: str = "full") -> np.ndarray:
        """Expand a frames-by-joints boolean mask to frames-by-columns.

        root_columns="trajectory" restricts an observed root to the root-path
        columns only (for trajectory-guided control).
        """
        mask = np.asarray(mask, dtype=bool)
        frames = mask.shape[0]
        if mask.shape[1] != self.skeleton.joint_count:
            raise ValueError("joint mask width must equal the joint count")
        out = np.zeros((frames, self.dim), dtype=bool)
        for j in range(self.skeleton.joint_count):
            if j == 0 and root_columns == "trajectory":
                cols = self.trajectory_columns()
            else:
                cols = self.joint_columns(j)
            out[:, cols] |= mask[:, j:j + 1]
        return out


@dataclass
class MotionFeatures:
    """Stacked per-frame feature vectors; the model's sample space."""

    data: np.ndarray    # (F, D) float32
    fps: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("features must have shape (F, D)")

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "MotionFeatures":
        return MotionFeatures(self.data.copy(), self.fps)


def detect_foot_contacts(positions: np.ndarray, skeleton: SkeletonSpec,
                         threshold: float = DEFAULT_CONTACT_THRESHOLD) -> np.ndarray:
    """Binary (F, 4) contacts: 1 where the squared per-frame speed of the
    corresponding heel/toe joint is below threshold^2."""
    positions = np.asarray(positions, dtype=np.float64)
    frames = positions.shape[0]
    out = np.zeros((frames, CONTACT_DIM), dtype=np.float64)
    joints = skeleton.contact_joints()
    if len(joints) < CONTACT_DIM:
        logger.warning("skeleton %s defines %d contact joints; remaining contact "
                       "columns stay zero", skeleton.name, len(joints))
    if frames == 1:
        out[:, :len(joints)] = 1.0
        return out
    vel = np.empty_like(positions)
    vel[:-1] = positions[1:] - positions[:-1]
    vel[-1] = vel[-2]
    for col, j in enumerate(joints[:CONTACT_DIM]):
        speed_sq = np.sum(vel[:, j] ** 2, axis=-1)
        out[:, col] = (speed_sq < threshold * threshold).astype(np.float64)
    return out


def _forward_diff(x: np.ndarray) -> np.ndarray:
    d = np.empty_like(x)
    d[:-1] = x[1:] - x[:-1]
    d[-1] = d[-2]
    return d


def extract_features(motion: GlobalMotion, skeleton: SkeletonSpec,
                     contact_threshold: float = DEFAULT_CONTACT_THRESHOLD) -> MotionFeatures:
    """Convert world-frame motion into the per-frame feature tuple."""
    if motion.frame_count < 2:
        raise ValueError("feature extraction needs at least 2 frames")
    if motion.local_rotations.shape[1] != skeleton.rotated_count:
        raise ValueError("motion rotation count does not match skeleton")

    up = skeleton.up_index
    lat, fwd = skeleton.plane_indices
    frames = motion.frame_count

    positions = forward_kinematics(skeleton, motion.root_translation, motion.local_rotations)
    root_pos = positions[:, 0]

    root_slot = skeleton.rotated_slot(0)
    root_quat = quat_normalize(motion.local_rotations[:, root_slot])
    yaw, remainder = yaw_twist_split(root_quat, up)
    inv_yaw = yaw_quat(-yaw, up)

    yaw_vel = np.empty(frames, dtype=np.float64)
    yaw_vel[:-1] = wrap_angle(yaw[1:] - yaw[:-1])
    yaw_vel[-1] = yaw_vel[-2]

    droot = _forward_diff(root_pos)
    local_step = quat_apply(inv_yaw, droot)
    plane_vel = np.stack([local_step[:, lat], local_step[:, fwd]], axis=-1)

    rel = positions[:, 1:] - root_pos[:, None]
    local_pos = quat_apply(inv_yaw[:, None], rel)

    rot_store = motion.local_rotations.copy()
    rot_store[:, root_slot] = remainder
    sixd = matrix_to_sixd(quat_to_matrix(rot_store))

    vel = _forward_diff(positions)
    contacts = detect_foot_contacts(positions, skeleton, contact_threshold)
    face = motion.face if motion.face is not None else np.zeros((frames, FACE_DIM))

    data = np.concatenate(
        [
            yaw_vel[:, None],
            plane_vel,
            root_pos[:, up:up + 1],
            local_pos.reshape(frames, -1),
            sixd.reshape(frames, -1),
            vel.reshape(frames, -1),
            contacts,
            face,
        ],
        axis=-1,
    )
    assert data.shape[1] == skeleton.feature_dim
    return MotionFeatures(data.astype(np.float32), motion.fps)


def integrate_root_track(features: MotionFeatures, skeleton: SkeletonSpec,
                         initial_yaw: float = 0.0,
                         initial_xz: tuple[float, float] = (0.0, 0.0)):
    """Integrate yaw/plane velocities; returns (yaw (F+1,), plane (F+1, 2)).

    Index F is the anchor one velocity step past the final frame, used for
    clip stitching.
    """
    data = features.data.astype(np.float64)
    frames = features.frame_count
    up = skeleton.up_index
    lat, fwd = skeleton.plane_indices

    yaw = np.empty(frames + 1, dtype=np.float64)
    plane = np.empty((frames + 1, 2), dtype=np.float64)
    yaw[0] = initial_yaw
    plane[0] = np.asarray(initial_xz, dtype=np.float64)
    yaw_vel = data[:, 0]
    plane_vel = data[:, 1:3]
    for i in range(frames):
        step3 = np.zeros(3)
        step3[lat] = plane_vel[i, 0]
        step3[fwd] = plane_vel[i, 1]
        world_step = quat_apply(yaw_quat(yaw[i], up), step3)
        plane[i + 1, 0] = plane[i, 0] + world_step[lat]
        plane[i + 1, 1] = plane[i, 1] + world_step[fwd]
        yaw[i + 1] = yaw[i] + yaw_vel[i]
    return yaw, plane


def recover_motion(features: MotionFeatures, skeleton: SkeletonSpec,
                   initial_yaw: float = 0.0,
                   initial_xz: tuple[float, float] = (0.0, 0.0)) -> GlobalMotion:
    """Inverse of extract_features given the first-frame yaw/plane seed."""
    layout = FeatureLayout(skeleton)
    if features.dim != layout.dim:
        raise ValueError(f"feature dim {features.dim} does not match skeleton dim {layout.dim}")
    data = features.data.astype(np.float64)
    frames = features.frame_count
    up = skeleton.up_index
    lat, fwd = skeleton.plane_indices

    yaw, plane = integrate_root_track(features, skeleton, initial_yaw, initial_xz)
    yaw = yaw[:frames]
    plane = plane[:frames]

    root_translation = np.zeros((frames, 3), dtype=np.float64)
    root_translation[:, lat] = plane[:, 0]
    root_translation[:, fwd] = plane[:, 1]
    root_translation[:, up] = data[:, 3]

    sixd = data[:, layout.rotations].reshape(frames, skeleton.rotated_count, 6)
    local = matrix_to_quat(sixd_to_matrix(sixd))
    root_slot = skeleton.rotated_slot(0)
    local[:, root_slot] = quat_multiply(yaw_quat(yaw, up), local[:, root_slot])

    face = data[:, layout.face]
    return GlobalMotion(features.fps, root_translation, local,
                        face=face if np.any(face) else None)
