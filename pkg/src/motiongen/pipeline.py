"""Mocap normalization pipeline: BVH document to canonical feature clips.

Stages, in ingestion order: axis alignment + T-pose standardization of the
document, retargeting onto the canonical skeleton (Euler channels become
quaternion local rotations here), temporal Gaussian smoothing, resampling to
30 fps, first-frame normalization, and fixed-length segmentation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bvh import BvhDocument
from .features import GlobalMotion
from .rotations import (
    euler_to_matrix,
    matrix_to_euler,
    matrix_to_quat,
    quat_apply,
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_exp,
    quat_log,
    quat_to_matrix,
    slerp,
    yaw_quat,
    yaw_twist_split,
)
from .skeleton import SkeletonSpec

logger = logging.getLogger(__name__)

CLIP_FRAMES = 150
MIN_REMAINDER_FRAMES = 30
TARGET_FPS = 30.0


# ---------------------------------------------------------------------------
# document evaluation


def document_pose_arrays(doc: BvhDocument):
    """Split the motion table into per-joint translations and local rotations.

    Returns (translations (F, J, 3), rotations (F, J, 4)); joints without
    position channels use their static offset, joints without rotation
    channels are identity.
    """
    frames = doc.frame_count
    j_count = len(doc.joints)
    offsets = doc.channel_offsets()
    translations = np.tile(np.stack([j.offset for j in doc.joints]), (frames, 1, 1))
    rotations = np.zeros((frames, j_count, 4))
    rotations[..., 0] = 1.0

    for idx, joint in enumerate(doc.joints):
        base = offsets[idx]
        euler = np.zeros((frames, 3))
        order = ""
        for c, channel in enumerate(joint.channels):
            col = doc.motion[:, base + c]
            axis = channel[0]
            if channel.endswith("position"):
                translations[:, idx, "XYZ".index(axis)] = joint.offset["XYZ".index(axis)] + col
            else:
                euler[:, len(order)] = np.deg2rad(col)
                order += axis
        if order:
            rotations[:, idx] = matrix_to_quat(euler_to_matrix(euler, order))
    return translations, rotations


def document_world_transforms(doc: BvhDocument):
    """Per-frame world positions and orientations of every document joint."""
    translations, rotations = document_pose_arrays(doc)
    frames = doc.frame_count
    j_count = len(doc.joints)
    pos = np.zeros((frames, j_count, 3))
    orient = np.zeros((frames, j_count, 4))
    for idx, joint in enumerate(doc.joints):
        if joint.parent < 0:
            pos[:, idx] = translations[:, idx]
            orient[:, idx] = rotations[:, idx]
        else:
            p = joint.parent
            orient[:, idx] = quat_multiply(orient[:, p], rotations[:, idx])
            pos[:, idx] = pos[:, p] + quat_apply(orient[:, p], translations[:, idx])
    return pos, quat_normalize(orient)


def motion_to_document(motion: GlobalMotion, skeleton: SkeletonSpec,
                       euler_order: str = "ZXY") -> BvhDocument:
    """Author a BVH document for ``motion`` on ``skeleton``.

    The root gets position channels plus rotations; every other rotated joint
    gets rotation channels; non-rotated joints carry no channels.
    """
    from .bvh import BvhJoint

    joints: list[BvhJoint] = []
    for j, name in enumerate(skeleton.joint_names):
        has_rot = skeleton.rotated_slot(j) is not None
        channels: tuple[str, ...] = ()
        if j == 0:
            channels = ("Xposition", "Yposition", "Zposition")
        if has_rot:
            channels = channels + tuple(f"{a}rotation" for a in euler_order)
        joints.append(BvhJoint(name, skeleton.parent_index[j],
                               skeleton.rest_offsets[j].copy(), channels))
    for j, joint in enumerate(joints):
        if joint.parent >= 0:
            joints[joint.parent].children.append(j)

    frames = motion.frame_count
    total = sum(len(j.channels) for j in joints)
    table = np.zeros((frames, total))
    col = 0
    for j, joint in enumerate(joints):
        if j == 0:
            table[:, col:col + 3] = motion.root_translation - skeleton.rest_offsets[0]
            col += 3
        slot = skeleton.rotated_slot(j)
        if slot is not None:
            euler = np.rad2deg(matrix_to_euler(
                quat_to_matrix(motion.local_rotations[:, slot]), euler_order))
            table[:, col:col + 3] = euler
            col += 3
    return BvhDocument(joints, 1.0 / motion.fps, table)


# ---------------------------------------------------------------------------
# standardization


def _minimal_arc(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Quaternion with smallest angle rotating unit vector src onto dst."""
    c = np.cross(src, dst)
    d = float(np.dot(src, dst))
    n = float(np.linalg.norm(c))
    if n < 1e-12:
        if d > 0:
            return np.array([1.0, 0.0, 0.0, 0.0])
        # antiparallel: 180 degrees about a deterministic perpendicular
        helper = np.eye(3)[int(np.argmin(np.abs(src)))]
        axis = np.cross(src, helper)
        axis = axis / np.linalg.norm(axis)
        return np.concatenate([[0.0], axis])
    axis = c / n
    angle = np.arctan2(n, d)
    return np.concatenate([[np.cos(angle / 2)], axis * np.sin(angle / 2)])


def _basis_change_quat(source_up: str, target_up: str) -> np.ndarray:
    if source_up == target_up:
        return np.array([1.0, 0.0, 0.0, 0.0])
    # y->z is +90 degrees about X; z->y is -90
    angle = np.pi / 2 if (source_up, target_up) == ("y", "z") else -np.pi / 2
    return quat_exp(np.array([angle, 0.0, 0.0]))


@dataclass
class StandardizeResult:
    document: BvhDocument
    unmatched_joints: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.unmatched_joints)


def standardize_and_align(doc: BvhDocument,
                          template: dict[str, np.ndarray] | None = None,
                          source_up: str = "y",
                          target_up: str = "y") -> StandardizeResult:
    """Rewrite the rest pose to the template T-pose and align the coordinate
    frame, folding corrections into motion so per-frame world poses of the
    alignment are preserved and the axis change is a rigid world rotation.
    """
    doc = doc.copy()
    unmatched: list[str] = []

    # axis alignment: rotate offsets and root channels, conjugate rotations
    b = _basis_change_quat(source_up, target_up)
    if abs(b[0] - 1.0) > 1e-15:
        _apply_world_rotation(doc, b)

    # per-joint rest corrections from bone directions
    if template:
        corrections = _rest_corrections(doc, template, unmatched)
        if any(abs(c[0] - 1.0) > 1e-12 for c in corrections.values()):
            _apply_rest_corrections(doc, corrections)

    return StandardizeResult(doc, unmatched)


def _apply_world_rotation(doc: BvhDocument, b: np.ndarray) -> None:
    b_inv = quat_conjugate(b)
    offsets = doc.channel_offsets()
    translations, rotations = document_pose_arrays(doc)
    for idx, joint in enumerate(doc.joints):
        joint.offset = quat_apply(b, joint.offset)
        base = offsets[idx]
        has_pos = any(c.endswith("position") for c in joint.channels)
        new_rot = quat_multiply(quat_multiply(b, rotations[:, idx]), b_inv)
        new_trans = quat_apply(b, translations[:, idx])
        _write_joint_channels(doc, idx, base,
                              new_trans if has_pos else None, new_rot)


def _rest_corrections(doc: BvhDocument, template: dict[str, np.ndarray],
                      unmatched: list[str]) -> dict[int, np.ndarray]:
    corrections: dict[int, np.ndarray] = {}
    for idx, joint in enumerate(doc.joints):
        corrections[idx] = np.array([1.0, 0.0, 0.0, 0.0])
        if joint.end_site or joint.name not in template:
            continue
        if not joint.children:
            unmatched.append(joint.name)
            continue
        child = max(joint.children, key=lambda c: np.linalg.norm(doc.joints[c].offset))
        d_cur = np.asarray(doc.joints[child].offset, dtype=np.float64)
        norm = np.linalg.norm(d_cur)
        if norm < 1e-9:
            unmatched.append(joint.name)
            continue
        d_cur = d_cur / norm
        d_tpl = np.asarray(template[joint.name], dtype=np.float64)
        d_tpl = d_tpl / np.linalg.norm(d_tpl)
        if float(np.dot(d_cur, d_tpl)) < -1.0 + 1e-9:
            unmatched.append(joint.name)
        corrections[idx] = _minimal_arc(d_tpl, d_cur)
    return corrections


def _apply_rest_corrections(doc: BvhDocument, corrections: dict[int, np.ndarray]) -> None:
    """New local frames: Q'_j = Q_j D_j, offsets o'_c = D_parent^-1 o_c,
    rotations R'_c = D_parent^-1 R_c D_c. World poses are unchanged."""
    offsets = doc.channel_offsets()
    translations, rotations = document_pose_arrays(doc)
    for idx, joint in enumerate(doc.joints):
        d_self = corrections[idx]
        d_parent = corrections[joint.parent] if joint.parent >= 0 else np.array([1.0, 0, 0, 0])
        if joint.parent >= 0:
            joint.offset = quat_apply(quat_conjugate(d_parent), joint.offset)
        if joint.end_site or not joint.channels:
            continue
        new_rot = quat_multiply(quat_multiply(quat_conjugate(d_parent), rotations[:, idx]), d_self)
        has_pos = any(c.endswith("position") for c in joint.channels)
        new_trans = quat_apply(quat_conjugate(d_parent), translations[:, idx]) if has_pos else None
        _write_joint_channels(doc, idx, offsets[idx], new_trans, new_rot)


def _write_joint_channels(doc: BvhDocument, idx: int, base: int,
                          translations: np.ndarray | None,
                          rotations: np.ndarray) -> None:
    joint = doc.joints[idx]
    order = joint.rotation_order
    if order:
        euler = np.rad2deg(matrix_to_euler(quat_to_matrix(rotations), order))
    rot_i = 0
    for c, channel in enumerate(joint.channels):
        axis = channel[0]
        if channel.endswith("position"):
            if translations is not None:
                doc.motion[:, base + c] = translations[:, "XYZ".index(axis)] - joint.offset["XYZ".index(axis)]
        else:
            doc.motion[:, base + c] = euler[:, rot_i]
            rot_i += 1


# ---------------------------------------------------------------------------
# retargeting


@dataclass
class RetargetMap:
    """Source-joint to canonical-joint transport.

    joint_map: source name -> canonical name (injective). Unmapped source
    joints are dropped; unmapped canonical rotated joints become identity and
    are reported for reconstruction-mask exclusion. rest_corrections rotate
    each mapped source world orientation into the canonical joint frame.
    scale converts source translation units to meters.
    """

    joint_map: dict[str, str]
    rest_corrections: dict[str, np.ndarray] = field(default_factory=dict)
    scale: float = 1.0

    def validate(self, doc: BvhDocument, target: SkeletonSpec) -> None:
        seen: set[str] = set()
        doc_names = {j.name for j in doc.joints if not j.end_site}
        for src, dst in self.joint_map.items():
            if src not in doc_names:
                raise ValueError(f"retarget map references unknown source joint {src!r}")
            if dst not in target.joint_names:
                raise ValueError(f"retarget map references unknown canonical joint {dst!r}")
            if dst in seen:
                raise ValueError(f"retarget map maps two sources onto {dst!r}")
            seen.add(dst)


@dataclass
class RetargetResult:
    motion: GlobalMotion
    excluded_joints: tuple[int, ...]    # canonical rotated joints left identity


def retarget(doc: BvhDocument, mapping: RetargetMap, target: SkeletonSpec) -> RetargetResult:
    """Transport document motion onto the canonical skeleton.

    World orientations of mapped source joints (composed with per-joint rest
    corrections) define canonical world orientations; canonical locals follow
    from the canonical tree. Root translation is the source root path scaled
    to meters.
    """
    mapping.validate(doc, target)
    pos, orient = document_world_transforms(doc)
    frames = doc.frame_count

    by_target: dict[int, int] = {}
    for src, dst in mapping.joint_map.items():
        by_target[target.joint_names.index(dst)] = doc.joint_index(src)

    world = np.zeros((frames, target.joint_count, 4))
    local = np.zeros((frames, target.joint_count, 4))
    world[..., 0] = 1.0
    local[..., 0] = 1.0
    excluded = []
    for j in range(target.joint_count):
        parent = target.parent_index[j]
        if j in by_target:
            src_orient = orient[:, by_target[j]]
            corr = mapping.rest_corrections.get(target.joint_names[j])
            world[:, j] = src_orient if corr is None else quat_multiply(src_orient, corr)
        else:
            world[:, j] = world[:, parent] if parent >= 0 else world[:, j]
            if j in target.rotated_joints:
                excluded.append(j)
        if parent < 0:
            local[:, j] = world[:, j]
        else:
            local[:, j] = quat_multiply(quat_conjugate(world[:, parent]), world[:, j])

    rotated = np.stack([local[:, j] for j in target.rotated_joints], axis=1)
    root_src = by_target.get(0, doc.root_index)
    root_translation = pos[:, root_src] * mapping.scale
    fps = 1.0 / doc.frame_time
    motion = GlobalMotion(fps, root_translation, quat_normalize(rotated))
    return RetargetResult(motion, tuple(excluded))


# ---------------------------------------------------------------------------
# smoothing / resampling / normalization / segmentation


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(motion: GlobalMotion, sigma_frames: float) -> GlobalMotion:
    """Temporal Gaussian filter: translations convolved directly, rotations
    averaged in the tangent space about the per-window mean then renormalized.
    Kernel weights falling outside the clip are renormalized per frame."""
    if sigma_frames <= 0:
        raise ValueError("sigma_frames must be positive")
    kernel = _gaussian_kernel(sigma_frames)
    radius = (len(kernel) - 1) // 2
    frames = motion.frame_count

    def smooth_signal(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for i in range(frames):
            lo, hi = max(0, i - radius), min(frames, i + radius + 1)
            w = kernel[lo - i + radius:hi - i + radius]
            w = w / w.sum()
            out[i] = np.tensordot(w, x[lo:hi], axes=(0, 0))
        return out

    translations = smooth_signal(motion.root_translation)

    # hemisphere-align each joint track so tangent maps stay in one chart
    track = motion.local_rotations.copy()
    sign = np.sum(track[1:] * track[:-1], axis=-1)
    sign = np.where(sign < 0, -1.0, 1.0)
    track[1:] *= np.cumprod(sign, axis=0)[..., None]

    smoothed = np.empty_like(track)
    for i in range(frames):
        lo, hi = max(0, i - radius), min(frames, i + radius + 1)
        w = kernel[lo - i + radius:hi - i + radius]
        w = w / w.sum()
        window = track[lo:hi]                      # (w, J, 4)
        ref = track[i]                             # (J, 4)
        for _ in range(2):  # one refinement toward the window mean
            logs = quat_log(quat_multiply(quat_conjugate(ref)[None], window))
            ref = quat_multiply(ref, quat_exp(np.tensordot(w, logs, axes=(0, 0))))
        smoothed[i] = ref
    face = motion.face.copy() if motion.face is not None else None
    return GlobalMotion(motion.fps, translations, quat_normalize(smoothed), face=face)


def resample(motion: GlobalMotion, target_fps: float = TARGET_FPS) -> GlobalMotion:
    """Resample to target_fps: linear interpolation for translations and face,
    spherical for rotations. Output frame k samples source time k/target_fps."""
    if motion.fps <= 0:
        raise ValueError("source fps must be positive")
    if motion.fps == target_fps:
        return motion.copy()
    src_frames = motion.frame_count
    out_frames = int(round(src_frames * target_fps / motion.fps))
    out_frames = max(out_frames, 1)
    u = np.arange(out_frames) * (motion.fps / target_fps)
    u = np.clip(u, 0.0, src_frames - 1)
    i0 = np.floor(u).astype(int)
    i1 = np.minimum(i0 + 1, src_frames - 1)
    t = u - i0

    translations = (1 - t)[:, None] * motion.root_translation[i0] \
        + t[:, None] * motion.root_translation[i1]
    rotations = slerp(motion.local_rotations[i0], motion.local_rotations[i1],
                      t[:, None])
    face = None
    if motion.face is not None:
        face = (1 - t)[:, None] * motion.face[i0] + t[:, None] * motion.face[i1]
    return GlobalMotion(target_fps, translations, rotations, face=face)


def normalize_clip(motion: GlobalMotion, skeleton: SkeletonSpec) -> GlobalMotion:
    """Rigidly move the clip so frame 0 faces the forward axis at the plane
    origin with its lowest foot joint on the ground."""
    from .kinematics import forward_kinematics

    up = skeleton.up_index
    lat, fwd = skeleton.plane_indices
    root_slot = skeleton.rotated_slot(0)

    yaw0, _ = yaw_twist_split(motion.local_rotations[0, root_slot], up)
    delta = yaw_quat(-float(yaw0), up)

    center = motion.root_translation[0].copy()
    center[up] = 0.0
    translations = quat_apply(delta, motion.root_translation - center)
    rotations = motion.local_rotations.copy()
    rotations[:, root_slot] = quat_multiply(delta, rotations[:, root_slot])

    foot_joints = list(skeleton.contact_joints()) or list(range(skeleton.joint_count))
    frame0 = forward_kinematics(skeleton, translations[:1], rotations[:1])
    ground = frame0[0, foot_joints, up].min()
    translations[:, up] -= ground

    face = motion.face.copy() if motion.face is not None else None
    return GlobalMotion(motion.fps, translations, quat_normalize(rotations), face=face)


def segment(motion: GlobalMotion, clip_frames: int = CLIP_FRAMES,
            min_remainder: int = MIN_REMAINDER_FRAMES) -> list[GlobalMotion]:
    """Consecutive non-overlapping windows; a final remainder shorter than
    ``min_remainder`` frames is dropped."""
    frames = motion.frame_count
    out: list[GlobalMotion] = []
    start = 0
    while start < frames:
        stop = min(start + clip_frames, frames)
        length = stop - start
        if length < clip_frames and length < min_remainder:
            break
        face = motion.face[start:stop].copy() if motion.face is not None else None
        out.append(GlobalMotion(motion.fps,
                                motion.root_translation[start:stop].copy(),
                                motion.local_rotations[start:stop].copy(),
                                face=face))
        start = stop
    return out
