"""Synthetic skeletons and procedural motion clips.

Everything here is deterministic and hermetic: the desk skeleton is a 24-joint
humanoid with all joints rotated and 6 body parts; the large configuration
mirrors the production dimensionalities (127 joints, 53 rotated, 12 parts).
Procedural clips are authored directly as local rotations so they are valid
by construction and cheap to regenerate in tests.
"""

from __future__ import annotations

import numpy as np

from .features import FACE_DIM, GlobalMotion
from .rotations import axis_angle_to_quat, identity_quat
from .skeleton import SkeletonSpec

_DESK_JOINTS = [
    # name, parent, offset (meters, Y-up T-pose)
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("spine1", 0, (0.0, 0.15, 0.0)),
    ("spine2", 1, (0.0, 0.15, 0.0)),
    ("neck", 2, (0.0, 0.12, 0.0)),
    ("head", 3, (0.0, 0.12, 0.0)),
    ("jaw", 4, (0.0, -0.02, 0.06)),
    ("l_shoulder", 2, (0.09, 0.1, 0.0)),
    ("l_elbow", 6, (0.26, 0.0, 0.0)),
    ("l_wrist", 7, (0.25, 0.0, 0.0)),
    ("l_hand", 8, (0.08, 0.0, 0.0)),
    ("l_thumb", 8, (0.03, -0.02, 0.03)),
    ("r_shoulder", 2, (-0.09, 0.1, 0.0)),
    ("r_elbow", 11, (-0.26, 0.0, 0.0)),
    ("r_wrist", 12, (-0.25, 0.0, 0.0)),
    ("r_hand", 13, (-0.08, 0.0, 0.0)),
    ("r_thumb", 13, (-0.03, -0.02, 0.03)),
    ("l_hip", 0, (0.1, -0.05, 0.0)),
    ("l_knee", 16, (0.0, -0.4, 0.0)),
    ("l_ankle", 17, (0.0, -0.4, 0.0)),
    ("l_toe", 18, (0.0, -0.05, 0.14)),
    ("r_hip", 0, (-0.1, -0.05, 0.0)),
    ("r_knee", 20, (0.0, -0.4, 0.0)),
    ("r_ankle", 21, (0.0, -0.4, 0.0)),
    ("r_toe", 22, (0.0, -0.05, 0.14)),
]

_DESK_PARTS = (
    (0, 1, 2, 3),            # torso
    (4, 5),                  # head
    (6, 7, 8, 9, 10),        # left arm
    (11, 12, 13, 14, 15),    # right arm
    (16, 17, 18, 19),        # left leg
    (20, 21, 22, 23),        # right leg
)


def desk_skeleton() -> SkeletonSpec:
    """24-joint humanoid; every joint rotated; 6 body parts; Y-up."""
    names = tuple(j[0] for j in _DESK_JOINTS)
    parents = tuple(j[1] for j in _DESK_JOINTS)
    offsets = np.array([j[2] for j in _DESK_JOINTS], dtype=np.float64)
    return SkeletonSpec(
        joint_names=names,
        parent_index=parents,
        rest_offsets=offsets,
        rotated_joints=tuple(range(24)),
        heel_joints=(18, 22),
        toe_joints=(19, 23),
        hand_joints=(9, 10, 14, 15),
        key_joints=(0, 4, 9, 14, 18, 22),
        body_parts=_DESK_PARTS,
        up_axis="y",
        name="desk24",
    )


def paper_scale_skeleton() -> SkeletonSpec:
    """Synthetic whole-body configuration matching the production counts:
    127 joints, 53 rotated (22 body + 30 hand + 1 jaw), 12 body parts."""
    names = ["root"]
    parents = [-1]
    offsets = [(0.0, 0.0, 0.0)]

    def add(name, parent, offset):
        names.append(name)
        parents.append(parent)
        offsets.append(offset)
        return len(names) - 1

    # body chain: 21 joints beyond the root
    body = [0]
    for i in range(21):
        body.append(add(f"body{i}", body[-1] if i < 5 else body[i // 2],
                        (0.02 * (i % 3 - 1), 0.08, 0.01)))
    l_wrist, r_wrist = body[10], body[11]
    hands = []
    for side, wrist in (("l", l_wrist), ("r", r_wrist)):
        for f in range(5):
            base = wrist
            for seg in range(3):
                base = add(f"{side}_f{f}_{seg}", base, (0.02, 0.0, 0.01 * f))
                hands.append(base)
    jaw = add("jaw", body[5], (0.0, 0.02, 0.03))
    rotated = tuple(body + hands + [jaw])
    assert len(rotated) == 53

    # filler landmark joints up to 127 total (non-rotated leaves)
    i = 0
    while len(names) < 127:
        add(f"marker{i}", body[i % len(body)], (0.01, 0.01, 0.01))
        i += 1

    n = len(names)
    part_count = 12
    parts = tuple(tuple(range(p, n, part_count)) for p in range(part_count))
    heel = (body[12], body[13])
    toe = (body[14], body[15])
    return SkeletonSpec(
        joint_names=tuple(names),
        parent_index=tuple(parents),
        rest_offsets=np.asarray(offsets, dtype=np.float64),
        rotated_joints=tuple(sorted(rotated)),
        heel_joints=heel,
        toe_joints=toe,
        hand_joints=tuple(hands[:10]),
        key_joints=(0, body[5], heel[0], heel[1], hands[0], hands[15]),
        body_parts=parts,
        up_axis="y",
        name="whole127",
    )


def _pose(skeleton: SkeletonSpec, joint_angles: dict[int, np.ndarray]) -> np.ndarray:
    """Local quaternions (N', 4) from a sparse joint -> axis-angle dict."""
    quats = np.broadcast_to(identity_quat(), (skeleton.rotated_count, 4)).copy()
    for joint, aa in joint_angles.items():
        slot = skeleton.rotated_slot(joint)
        if slot is None:
            raise ValueError(f"joint {joint} carries no rotation")
        quats[slot] = axis_angle_to_quat(np.asarray(aa, dtype=np.float64))
    return quats


def walk_clip(skeleton: SkeletonSpec, frames: int = 150, fps: float = 30.0,
              speed: float = 0.03, stride_hz: float = 1.0,
              heading: float = 0.0, sway: float = 0.25,
              with_face: bool = True) -> GlobalMotion:
    """Procedural walk: root advances along its facing, legs and arms swing
    in counter-phase, feet alternate near-zero velocity (stance)."""
    names = {n: i for i, n in enumerate(skeleton.joint_names)}
    t = np.arange(frames) / fps
    phase = 2.0 * np.pi * stride_hz * t

    rotations = np.zeros((frames, skeleton.rotated_count, 4))
    root_translation = np.zeros((frames, 3))
    lat, fwd = skeleton.plane_indices
    up = skeleton.up_index

    direction = np.zeros(3)
    direction[lat] = np.sin(heading)
    direction[fwd] = np.cos(heading)
    for f in range(frames):
        swing = sway * np.sin(phase[f])
        pose = {
            0: np.array([0.0, heading, 0.0]) if up == 1 else np.array([0.0, 0.0, heading]),
        }
        for side, sign in (("l", 1.0), ("r", -1.0)):
            if f"{side}_hip" in names:
                pose[names[f"{side}_hip"]] = np.array([sign * swing, 0.0, 0.0])
            if f"{side}_knee" in names:
                pose[names[f"{side}_knee"]] = np.array([max(0.0, -sign * swing) * 0.8, 0.0, 0.0])
            if f"{side}_shoulder" in names:
                pose[names[f"{side}_shoulder"]] = np.array([-sign * swing * 0.6, 0.0, 0.0])
        rotations[f] = _pose(skeleton, pose)
        root_translation[f] = direction * speed * f
        root_translation[f, up] = 0.9 + 0.01 * np.sin(2 * phase[f])

    face = np.zeros((frames, FACE_DIM)) if with_face else None
    return GlobalMotion(fps, root_translation, rotations, face=face)


def gesture_clip(skeleton: SkeletonSpec, frames: int = 150, fps: float = 30.0,
                 arm_hz: float = 0.8, amplitude: float = 0.6, lead: str = "l",
                 nod: float = 0.0, with_face: bool = True) -> GlobalMotion:
    """Stationary gesturing: arms wave, optional head nod, root fixed."""
    names = {n: i for i, n in enumerate(skeleton.joint_names)}
    t = np.arange(frames) / fps
    phase = 2.0 * np.pi * arm_hz * t

    rotations = np.zeros((frames, skeleton.rotated_count, 4))
    root_translation = np.zeros((frames, 3))
    root_translation[:, skeleton.up_index] = 0.9

    for f in range(frames):
        wave = amplitude * np.sin(phase[f])
        pose = {}
        for side, sign in (("l", 1.0), ("r", -1.0)):
            gain = 1.0 if side == lead else 0.4
            if f"{side}_shoulder" in names:
                pose[names[f"{side}_shoulder"]] = np.array([0.0, 0.0, sign * gain * wave])
            if f"{side}_elbow" in names:
                pose[names[f"{side}_elbow"]] = np.array([0.0, gain * wave * 0.5, 0.0])
        if nod and "neck" in names:
            pose[names["neck"]] = np.array([nod * np.sin(phase[f] * 0.5), 0.0, 0.0])
        rotations[f] = _pose(skeleton, pose)

    face = None
    if with_face:
        face = np.zeros((frames, FACE_DIM))
        face[:, 0] = 0.1 * np.sin(phase)
    return GlobalMotion(fps, root_translation, rotations, face=face)


def turn_clip(skeleton: SkeletonSpec, frames: int = 150, fps: float = 30.0,
              total_turn: float = np.pi, radius: float = 0.5,
              with_face: bool = True) -> GlobalMotion:
    """Root walks a circular arc while yawing to keep facing the tangent."""
    t = np.linspace(0.0, 1.0, frames)
    yaw = total_turn * t
    rotations = np.zeros((frames, skeleton.rotated_count, 4))
    root_translation = np.zeros((frames, 3))
    lat, fwd = skeleton.plane_indices
    up = skeleton.up_index
    axis = np.zeros(3)
    axis[up] = 1.0
    for f in range(frames):
        rotations[f] = _pose(skeleton, {0: axis * yaw[f]})
        root_translation[f, lat] = radius * (1.0 - np.cos(yaw[f]))
        root_translation[f, fwd] = radius * np.sin(yaw[f])
        root_translation[f, up] = 0.9
    face = np.zeros((frames, FACE_DIM)) if with_face else None
    return GlobalMotion(fps, root_translation, rotations, face=face)


OVERFIT_CAPTIONS = [
    "a person walks forward slowly",
    "a person walks forward quickly",
    "a person waves the left arm",
    "a person waves the right arm",
    "a person waves both arms overhead",
    "a person turns in place to the left",
    "a person marches with high knees",
    "a person nods while gesturing",
]


def overfit_corpus(skeleton: SkeletonSpec, frames: int = 32,
                   fps: float = 30.0) -> list[tuple[str, GlobalMotion]]:
    """Eight visually distinct captioned clips for memorization runs."""
    clips = [
        walk_clip(skeleton, frames, fps, speed=0.015, stride_hz=0.8),
        walk_clip(skeleton, frames, fps, speed=0.05, stride_hz=1.6),
        gesture_clip(skeleton, frames, fps, lead="l", amplitude=0.7),
        gesture_clip(skeleton, frames, fps, lead="r", amplitude=0.7),
        gesture_clip(skeleton, frames, fps, lead="l", amplitude=1.0, arm_hz=1.4),
        turn_clip(skeleton, frames, fps, total_turn=np.pi / 2),
        walk_clip(skeleton, frames, fps, speed=0.02, stride_hz=1.2, sway=0.6),
        gesture_clip(skeleton, frames, fps, lead="r", amplitude=0.5, nod=0.3),
    ]
    return list(zip(OVERFIT_CAPTIONS, clips))


def looping_walk(skeleton: SkeletonSpec, period_frames: int = 30,
                 loops: int = 2, fps: float = 30.0) -> GlobalMotion:
    """A walk whose pose pattern repeats exactly every ``period_frames``."""
    clip = walk_clip(skeleton, period_frames * loops, fps,
                     speed=0.02, stride_hz=fps / period_frames)
    return clip


def _audio_features(frames: int, dim: int = 16, beat_hz: float = 2.0,
                    fps: float = 30.0) -> np.ndarray:
    t = np.arange(frames) / fps
    bands = np.sin(2 * np.pi * beat_hz * t[:, None] * (1 + np.arange(dim) / dim))
    return bands.astype(np.float32)


def write_fixture_corpus(out_dir, skeleton: SkeletonSpec | None = None,
                         sequence_frames: int = 330, seed: int = 0) -> None:
    """Write a small multi-dataset BVH corpus with caption/audio/task sidecars.

    Three datasets: text-captioned locomotion, music-tagged dance-ish clips,
    and speech-tagged gesturing with audio attachments.
    """
    import struct
    from pathlib import Path

    from .bvh import write_bvh
    from .pipeline import motion_to_document

    skeleton = skeleton or desk_skeleton()
    out = Path(out_dir)
    rng = np.random.default_rng(seed)

    def emit(dataset: str, name: str, motion: GlobalMotion, captions: list[str],
             task: str = "T2M", audio: np.ndarray | None = None):
        folder = out / dataset
        folder.mkdir(parents=True, exist_ok=True)
        doc = motion_to_document(motion, skeleton)
        (folder / f"{name}.bvh").write_text(write_bvh(doc), encoding="utf-8")
        if captions:
            (folder / f"{name}.captions.txt").write_text(
                "\n".join(captions) + "\n", encoding="utf-8")
        if task != "T2M":
            (folder / f"{name}.task.txt").write_text(task + "\n", encoding="utf-8")
        if audio is not None:
            with open(folder / f"{name}.audio.f32", "wb") as fh:
                fh.write(struct.pack("<2I", audio.shape[0], audio.shape[1]))
                fh.write(audio.astype("<f4").tobytes(order="C"))

    for i in range(3):
        speed = 0.02 + 0.01 * i
        emit("locomotion", f"walk{i}",
             walk_clip(skeleton, sequence_frames, speed=speed,
                       stride_hz=1.0 + 0.2 * i, heading=0.4 * i - 0.4),
             [f"a person walks at pace {i}", "someone strolls forward"])
        emit("locomotion", f"turn{i}",
             turn_clip(skeleton, sequence_frames, total_turn=np.pi * (0.5 + 0.4 * i)),
             [f"a person walks a curved path variant {i}"])

    for i in range(3):
        frames = sequence_frames
        emit("dance", f"dance{i}",
             gesture_clip(skeleton, frames, arm_hz=1.2 + 0.3 * i, amplitude=0.9),
             [f"a dancer moves rhythmically style {i}"],
             task="M2D", audio=_audio_features(frames, beat_hz=1.5 + 0.5 * i))

    for i in range(3):
        frames = sequence_frames
        emit("speech", f"talk{i}",
             gesture_clip(skeleton, frames, arm_hz=0.6, amplitude=0.4 + 0.1 * i,
                          nod=0.2, lead="r" if i % 2 else "l"),
             [f"a speaker gestures while talking take {i}"],
             task="S2G", audio=_audio_features(frames, beat_hz=4.0 + i))
