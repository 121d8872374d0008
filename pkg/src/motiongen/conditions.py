"""Condition channels, featurizers, and per-sample mask bundles."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureLayout, MotionFeatures
from .skeleton import SkeletonSpec

CHANNELS = ("text", "global", "speech", "music", "reference")

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def stable_token_id(token: str, vocab: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % vocab


class HashedTextFeaturizer:
    """Vocabulary-free text featurizer: lowercase word tokens are hashed into
    a fixed table and emitted as one-hot rows, so the downstream learned
    projection acts as an embedding table. Deterministic across runs."""

    def __init__(self, vocab: int = 64, max_tokens: int = 16, pooled: bool = False):
        self.vocab = vocab
        self.max_tokens = max_tokens
        self.pooled = pooled

    @property
    def dim(self) -> int:
        return self.vocab

    def encode(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())[: self.max_tokens]
        if not tokens:
            return np.zeros((1, self.vocab), dtype=np.float32)
        out = np.zeros((len(tokens), self.vocab), dtype=np.float32)
        for i, tok in enumerate(tokens):
            out[i, stable_token_id(tok, self.vocab)] = 1.0
        if self.pooled:
            return out.mean(axis=0, keepdims=True)
        return out


@dataclass
class MaskSet:
    """Per-sample masks. task_mask/recon_mask are frames-by-joints booleans;
    disentangle is joint-level (True = joint kept dense in the global
    condition). None means all-true."""

    task_mask: np.ndarray | None = None
    task_kind: str | None = None
    disentangle: np.ndarray | None = None
    recon_mask: np.ndarray | None = None

    def recon_columns(self, layout: FeatureLayout, frames: int,
                      face_present: bool = True) -> np.ndarray:
        """Expand the reconstruction mask to feature columns, zeroing the face
        block when the sample has no face data."""
        if self.recon_mask is None:
            joint = np.ones((frames, layout.skeleton.joint_count), dtype=bool)
        else:
            joint = np.asarray(self.recon_mask, dtype=bool)
        cols = layout.expand_joint_mask(joint)
        if not face_present:
            cols[:, layout.face] = False
        return cols

    def condition_columns(self, layout: FeatureLayout, frames: int) -> np.ndarray:
        """Column gate for the global-motion condition: task mask joined with
        the joint-level disentanglement selection."""
        joint = (np.ones((frames, layout.skeleton.joint_count), dtype=bool)
                 if self.task_mask is None else np.asarray(self.task_mask, dtype=bool))
        if self.disentangle is not None:
            joint = joint & np.asarray(self.disentangle, dtype=bool)[None, :]
        root_mode = "trajectory" if self.task_kind == "trajectory" else "full"
        return layout.expand_joint_mask(joint, root_columns=root_mode)


@dataclass
class ConditionBundle:
    """Optional condition channels for one sample."""

    text: str | None = None
    reference_motion: MotionFeatures | None = None
    global_motion: MotionFeatures | None = None
    speech: np.ndarray | None = None        # (F, d_s) frame-aligned
    music: np.ndarray | None = None         # (F, d_m) frame-aligned

    def present(self, channel: str) -> bool:
        value = {
            "text": self.text,
            "global": self.global_motion,
            "speech": self.speech,
            "music": self.music,
            "reference": self.reference_motion,
        }[channel]
        return value is not None

    @property
    def empty(self) -> bool:
        return not any(self.present(c) for c in CHANNELS)

    def validate(self, skeleton: SkeletonSpec,
                 speech_dim: int | None = None,
                 music_dim: int | None = None) -> None:
        problems: list[str] = []
        if self.speech is not None and self.music is not None:
            problems.append("speech and music are mutually exclusive")
        for name, feats in (("reference_motion", self.reference_motion),
                            ("global_motion", self.global_motion)):
            if feats is not None and feats.dim != skeleton.feature_dim:
                problems.append(
                    f"{name} dimension {feats.dim} does not match skeleton "
                    f"feature dim {skeleton.feature_dim}")
            if feats is not None and feats.frame_count > 150:
                problems.append(f"{name} exceeds 150 frames")
        if self.speech is not None and speech_dim is not None \
                and self.speech.shape[-1] != speech_dim:
            problems.append(f"speech feature dim {self.speech.shape[-1]} != {speech_dim}")
        if self.music is not None and music_dim is not None \
                and self.music.shape[-1] != music_dim:
            problems.append(f"music feature dim {self.music.shape[-1]} != {music_dim}")
        if problems:
            raise ValueError("; ".join(problems))


def empty_bundle() -> ConditionBundle:
    return ConditionBundle()
