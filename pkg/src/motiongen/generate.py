"""Clip-by-clip autoregressive generation and session stitching.

Each new clip is conditioned on the trailing 150 frames of the session
history (or a user-supplied starter reference) and integrated into the world
from the running terminal anchor, so the stitched root trajectory is
continuous across clip boundaries by construction.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditions import ConditionBundle, MaskSet
from .diffusion import ddpm_sample
from .features import (
    FeatureLayout,
    GlobalMotion,
    MotionFeatures,
    integrate_root_track,
    recover_motion,
)
from .masks import TaskMaskSpec, make_task_mask
from .model import Denoiser
from .schedule import NoiseSchedule
from .skeleton import SkeletonSpec

REFERENCE_WINDOW = 150
DEFAULT_CLIP_FRAMES = 150


def derive_seed(session_seed: int, clip_index: int) -> int:
    return int(np.random.SeedSequence([session_seed, clip_index]).generate_state(1)[0])


@dataclass
class SessionState:
    session_id: str
    skeleton: SkeletonSpec
    seed: int
    clips: list[MotionFeatures] = field(default_factory=list)
    clip_meta: list[dict] = field(default_factory=list)
    user_reference: MotionFeatures | None = None
    initial_yaw: float = 0.0
    initial_xz: tuple[float, float] = (0.0, 0.0)

    def reference_window(self) -> MotionFeatures | None:
        """Trailing 150 frames of history (or the user starter reference)."""
        if not self.clips:
            return self.user_reference
        rows = [c.data for c in self.clips]
        stacked = np.concatenate(rows, axis=0)
        return MotionFeatures(stacked[-REFERENCE_WINDOW:].copy(), self.clips[-1].fps)

    def anchors(self) -> list[tuple[float, tuple[float, float]]]:
        """Starting (yaw, plane) anchor of each clip, plus the terminal one."""
        out = [(self.initial_yaw, tuple(self.initial_xz))]
        yaw, plane = self.initial_yaw, np.asarray(self.initial_xz, dtype=np.float64)
        for clip in self.clips:
            track_yaw, track_plane = integrate_root_track(
                clip, self.skeleton, yaw, tuple(plane))
            yaw, plane = float(track_yaw[-1]), track_plane[-1]
            out.append((yaw, tuple(float(v) for v in plane)))
        return out

    @property
    def total_frames(self) -> int:
        return sum(c.frame_count for c in self.clips)


def continue_clip(model: Denoiser, schedule: NoiseSchedule, session: SessionState,
                  bundle: ConditionBundle, masks: MaskSet | None = None,
                  frames: int = DEFAULT_CLIP_FRAMES,
                  guidance_scale: float = 1.0) -> MotionFeatures:
    """Generate the next clip: injects the history reference, samples with a
    per-clip seed derived from the session seed, appends, and advances the
    anchor."""
    if bundle.reference_motion is not None:
        raise ValueError("bundle must not carry an explicit reference; "
                         "the session injects it from history")
    if model.skeleton.joint_names != session.skeleton.joint_names:
        raise ValueError("session skeleton does not match the loaded model")

    reference = session.reference_window()
    if reference is None and session.clips == [] and bundle.empty:
        raise ValueError("empty session needs a user reference or a condition")
    if reference is not None and reference.frame_count > model.config.max_frames:
        reference = MotionFeatures(
            reference.data[-model.config.max_frames:].copy(), reference.fps)
    bundle.reference_motion = reference

    masks = masks or MaskSet()
    observed_values = observed_mask = None
    if masks.task_mask is not None:
        if bundle.global_motion is None:
            raise ValueError("a task mask requires a global-motion condition")
        layout = FeatureLayout(session.skeleton)
        root_mode = "trajectory" if masks.task_kind == "trajectory" else "full"
        observed_mask = torch.from_numpy(
            layout.expand_joint_mask(masks.task_mask, root_columns=root_mode))
        observed_values = torch.from_numpy(
            bundle.global_motion.data.astype(np.float32))

    seed = derive_seed(session.seed, len(session.clips))
    sample = ddpm_sample(model, bundle, masks, schedule, frames=frames,
                         seed=seed, guidance_scale=guidance_scale,
                         observed_values=observed_values,
                         observed_mask=observed_mask)
    feats = MotionFeatures(sample.cpu().numpy().astype(np.float32), 30.0)
    session.clips.append(feats)
    session.clip_meta.append({
        "caption": bundle.text,
        "task_kind": masks.task_kind,
        "frames": frames,
        "seed": seed,
        "had_audio": bundle.speech is not None or bundle.music is not None,
    })
    bundle.reference_motion = None
    return feats


def stitch(session: SessionState) -> GlobalMotion:
    """Recover every clip from its running anchor and concatenate."""
    if not session.clips:
        raise ValueError("cannot stitch an empty session")
    anchors = session.anchors()
    motions = [recover_motion(clip, session.skeleton,
                              initial_yaw=anchors[i][0], initial_xz=anchors[i][1])
               for i, clip in enumerate(session.clips)]
    translation = np.concatenate([m.root_translation for m in motions])
    rotations = np.concatenate([m.local_rotations for m in motions])
    faces = [m.face if m.face is not None
             else np.zeros((m.frame_count, 100)) for m in motions]
    face = np.concatenate(faces)
    return GlobalMotion(motions[0].fps, translation, rotations,
                        face=face if np.any(face) else None)


# ---------------------------------------------------------------------------
# session serialization


def _encode_features(feats: MotionFeatures) -> dict:
    return {
        "fps": feats.fps,
        "frames": feats.frame_count,
        "dim": feats.dim,
        "data": base64.b64encode(feats.data.astype("<f4").tobytes()).decode("ascii"),
    }


def _decode_features(payload: dict) -> MotionFeatures:
    raw = base64.b64decode(payload["data"])
    data = np.frombuffer(raw, dtype="<f4").reshape(payload["frames"], payload["dim"])
    return MotionFeatures(data.copy(), payload["fps"])


def save_session(session: SessionState, path) -> None:
    from .curriculum import _skeleton_dict

    payload = {
        "session_id": session.session_id,
        "seed": session.seed,
        "skeleton": _skeleton_dict(session.skeleton),
        "initial_yaw": session.initial_yaw,
        "initial_xz": list(session.initial_xz),
        "clips": [_encode_features(c) for c in session.clips],
        "clip_meta": session.clip_meta,
        "user_reference": (_encode_features(session.user_reference)
                           if session.user_reference is not None else None),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_session(path) -> SessionState:
    from .curriculum import skeleton_from_dict

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SessionState(
        session_id=payload["session_id"],
        skeleton=skeleton_from_dict(payload["skeleton"]),
        seed=payload["seed"],
        clips=[_decode_features(c) for c in payload["clips"]],
        clip_meta=list(payload["clip_meta"]),
        user_reference=(_decode_features(payload["user_reference"])
                        if payload["user_reference"] else None),
        initial_yaw=payload["initial_yaw"],
        initial_xz=tuple(payload["initial_xz"]),
    )
