import numpy as np
import pytest

from motiongen import fixtures
from motiongen import rotations as rot
from motiongen.features import (
    FeatureLayout,
    GlobalMotion,
    MotionFeatures,
    detect_foot_contacts,
    extract_features,
    integrate_root_track,
    recover_motion,
)
from motiongen.kinematics import forward_kinematics
from motiongen.skeleton import feature_dim


def static_motion(skeleton, frames=10, height=0.9):
    rotations = np.zeros((frames, skeleton.rotated_count, 4))
    rotations[..., 0] = 1.0
    translation = np.zeros((frames, 3))
    translation[:, skeleton.up_index] = height
    return GlobalMotion(30.0, translation, rotations)


def test_dimension_formula():
    assert feature_dim(127, 53) == 1185
    assert feature_dim(24, 24) == 393


def test_layout_matches_constructed_vector(desk, whole_body):
    for sk in (desk, whole_body):
        layout = FeatureLayout(sk)
        assert layout.dim == sk.feature_dim
        clip = fixtures.walk_clip(sk, frames=8)
        feats = extract_features(clip, sk)
        assert feats.data.shape == (8, sk.feature_dim)


def test_static_motion_features(desk):
    feats = extract_features(static_motion(desk), desk)
    layout = FeatureLayout(desk)
    data = feats.data
    assert np.allclose(data[:, 0], 0)            # yaw velocity
    assert np.allclose(data[:, 1:3], 0)          # plane velocity
    assert np.allclose(data[:, 3], 0.9)          # height
    assert np.allclose(data[:, layout.velocities], 0)
    assert np.allclose(data[:, layout.contacts], 1.0)


def test_constant_x_translation_facing_forward(desk):
    frames = 20
    motion = static_motion(desk, frames)
    motion.root_translation[:, 0] = 0.03 * np.arange(frames)
    feats = extract_features(motion, desk)
    assert np.allclose(feats.data[:, 1], 0.03, atol=1e-6)   # lateral
    assert np.allclose(feats.data[:, 2], 0.0, atol=1e-6)    # forward
    assert np.allclose(feats.data[:, 0], 0.0, atol=1e-6)


def test_yaw_rotation_invariance(desk):
    """Rigidly yawing the clip changes only the first-frame facing seed."""
    clip = fixtures.walk_clip(desk, frames=40, heading=0.3)
    feats_a = extract_features(clip, desk)

    delta = 1.1
    g = rot.yaw_quat(delta, desk.up_index)
    rotated = clip.copy()
    rotated.root_translation = rot.quat_apply(g, clip.root_translation)
    root_slot = desk.rotated_slot(0)
    rotated.local_rotations[:, root_slot] = rot.quat_multiply(
        g, rotated.local_rotations[:, root_slot])
    feats_b = extract_features(rotated, desk)

    layout = FeatureLayout(desk)
    assert np.abs(feats_a.data[:, 0] - feats_b.data[:, 0]).max() < 1e-5
    assert np.abs(feats_a.data[:, 1:3] - feats_b.data[:, 1:3]).max() < 1e-5
    assert np.abs(feats_a.data[:, 3] - feats_b.data[:, 3]).max() < 1e-6
    assert np.abs(feats_a.data[:, layout.positions] - feats_b.data[:, layout.positions]).max() < 1e-5
    assert np.abs(feats_a.data[:, layout.rotations] - feats_b.data[:, layout.rotations]).max() < 1e-5
    va = feats_a.data[:, layout.velocities].reshape(40, -1, 3)
    vb = feats_b.data[:, layout.velocities].reshape(40, -1, 3)
    assert np.abs(np.linalg.norm(va, axis=-1) - np.linalg.norm(vb, axis=-1)).max() < 1e-5
    assert np.array_equal(feats_a.data[:, layout.contacts], feats_b.data[:, layout.contacts])


def test_plane_translation_invariance(desk):
    clip = fixtures.walk_clip(desk, frames=30)
    feats_a = extract_features(clip, desk)
    moved = clip.copy()
    moved.root_translation = moved.root_translation + np.array([5.0, 0.0, -2.0])
    feats_b = extract_features(moved, desk)
    assert np.abs(feats_a.data - feats_b.data).max() < 1e-5


def test_recover_extract_round_trip(desk):
    clip = fixtures.walk_clip(desk, frames=150)
    feats = extract_features(clip, desk)
    root_slot = desk.rotated_slot(0)
    yaw0, _ = rot.yaw_twist_split(clip.local_rotations[0, root_slot], desk.up_index)
    lat, fwd = desk.plane_indices
    rec = recover_motion(feats, desk, initial_yaw=float(yaw0),
                         initial_xz=(clip.root_translation[0, lat],
                                     clip.root_translation[0, fwd]))
    p0 = forward_kinematics(desk, clip.root_translation, clip.local_rotations)
    p1 = forward_kinematics(desk, rec.root_translation, rec.local_rotations)
    assert np.abs(p0 - p1).max() < 1e-4


def test_feature_space_fixed_point(desk):
    clip = fixtures.turn_clip(desk, frames=60)
    feats = extract_features(clip, desk)
    rec = recover_motion(feats, desk)
    feats2 = extract_features(rec, desk)
    assert np.abs(feats.data - feats2.data).max() < 1e-6


def test_zero_features_hover(desk):
    layout = FeatureLayout(desk)
    data = np.zeros((5, layout.dim), dtype=np.float32)
    data[:, 3] = 1.0  # height
    ident6 = np.tile(np.array([1, 0, 0, 0, 1, 0], dtype=np.float32), desk.rotated_count)
    data[:, layout.rotations] = ident6
    rec = recover_motion(MotionFeatures(data, 30.0), desk)
    assert np.allclose(rec.root_translation[:, desk.up_index], 1.0)
    assert np.allclose(rec.root_translation[:, 0], 0.0)
    assert rot.rotation_angle_between(
        rec.local_rotations.reshape(-1, 4),
        np.tile([1.0, 0, 0, 0], (5 * desk.rotated_count, 1))).max() < 1e-9


def test_extract_rejects_single_frame(desk):
    with pytest.raises(ValueError, match="2 frames"):
        extract_features(static_motion(desk, frames=1), desk)


def test_recover_rejects_dimension_mismatch(desk):
    with pytest.raises(ValueError, match="dim"):
        recover_motion(MotionFeatures(np.zeros((4, 10), dtype=np.float32), 30.0), desk)


def test_contacts_static_all_ones(desk):
    pos = np.zeros((8, desk.joint_count, 3))
    contacts = detect_foot_contacts(pos, desk, 0.002)
    assert np.all(contacts == 1.0)


def test_contacts_fast_motion_all_zero(desk):
    pos = np.zeros((8, desk.joint_count, 3))
    pos += (0.004 * np.arange(8))[:, None, None]  # 2x threshold speed
    contacts = detect_foot_contacts(pos, desk, 0.002)
    assert np.all(contacts == 0.0)


def test_contacts_match_hand_labeled_gait(desk):
    """30-frame alternating gait: the stance foot is pinned, the swing foot
    advances 0.01 m/frame. With forward differences the left foot's last
    stance frame (14) already shows its departure velocity, so hand labels
    are left = frames 0-13, right = frames 14-29 (final frame repeats)."""
    frames, step = 30, 0.01
    pos = np.zeros((frames, desk.joint_count, 3))
    left_joints = (desk.heel_joints[0], desk.toe_joints[0])
    right_joints = (desk.heel_joints[1], desk.toe_joints[1])
    for f in range(frames):
        for j in left_joints:
            pos[f, j, 0] = 0.0 if f < 15 else step * (f - 14)
        for j in right_joints:
            pos[f, j, 0] = step * min(f, 14)
    contacts = detect_foot_contacts(pos, desk, threshold=0.002)

    hand = np.zeros((frames, 4))
    hand[:14, 0] = 1.0   # left heel
    hand[:14, 2] = 1.0   # left toe
    hand[14:, 1] = 1.0   # right heel
    hand[14:, 3] = 1.0   # right toe
    assert np.array_equal(contacts, hand)


def test_integrate_root_track_anchor(desk):
    clip = fixtures.walk_clip(desk, frames=20)
    feats = extract_features(clip, desk)
    yaw, plane = integrate_root_track(feats, desk)
    assert yaw.shape == (21,)
    assert plane.shape == (21, 2)
    # anchor continues one velocity step beyond the last frame
    assert yaw[-1] == pytest.approx(yaw[-2] + feats.data[-1, 0], abs=1e-9)
