"""Directory ingestion: BVH files plus sidecars into a clip store.

Sidecar files next to each ``<name>.bvh``:
  - ``<name>.captions.txt``  one caption per line
  - ``<name>.audio.f32``     frame-major float32 features with a
                             (frame_count, feature_dim) u32 header
  - ``<name>.task.txt``      optional task tag (default T2M)

The dataset tag is the BVH file's parent directory name. Stage order:
standardize/align, retarget, Gaussian smoothing, resample to 30 fps,
first-frame normalization, segmentation, feature extraction.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import parse_bvh
from .features import extract_features
from .pipeline import (
    RetargetMap,
    gaussian_smooth,
    normalize_clip,
    resample,
    retarget,
    segment,
    standardize_and_align,
)
from .skeleton import SkeletonSpec
from .store import ClipRecord, ClipStore, build_manifest

logger = logging.getLogger(__name__)


@dataclass
class RetargetPlan:
    """Retarget map plus source-convention settings, loadable from JSON."""

    mapping: RetargetMap
    template: dict[str, np.ndarray] = field(default_factory=dict)
    source_up: str = "y"
    target_up: str = "y"

    @staticmethod
    def identity(skeleton: SkeletonSpec) -> "RetargetPlan":
        return RetargetPlan(RetargetMap({n: n for n in skeleton.joint_names}))

    @staticmethod
    def load(path) -> "RetargetPlan":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        mapping = RetargetMap(
            joint_map=dict(payload["joint_map"]),
            rest_corrections={k: np.asarray(v, dtype=np.float64)
                              for k, v in payload.get("rest_corrections", {}).items()},
            scale=float(payload.get("scale", 1.0)),
        )
        template = {k: np.asarray(v, dtype=np.float64)
                    for k, v in payload.get("template", {}).items()}
        return RetargetPlan(mapping, template,
                            payload.get("source_up", "y"),
                            payload.get("target_up", "y"))

    def save(self, path) -> None:
        payload = {
            "joint_map": self.mapping.joint_map,
            "rest_corrections": {k: [float(x) for x in v]
                                 for k, v in self.mapping.rest_corrections.items()},
            "scale": self.mapping.scale,
            "template": {k: [float(x) for x in v] for k, v in self.template.items()},
            "source_up": self.source_up,
            "target_up": self.target_up,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_sidecar_captions(path: Path) -> list[str]:
    if not path.exists():
        return []
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()]


def _read_sidecar_audio(path: Path) -> np.ndarray | None:
    if not path.exists():
        return None
    blob = path.read_bytes()
    frames, dim = struct.unpack_from("<2I", blob, 0)
    return np.frombuffer(blob, dtype="<f4", count=frames * dim,
                         offset=8).reshape(frames, dim).astype(np.float64)


def ingest_file(path: Path, skeleton: SkeletonSpec, plan: RetargetPlan,
                sigma: float = 1.0,
                contact_threshold: float = 0.002
                ) -> tuple[list[ClipRecord], dict[str, np.ndarray]]:
    """Run one BVH file through the full pipeline.

    Returns unsplit records plus per-clip audio feature slices keyed by the
    record's audio_path."""
    doc = parse_bvh(path.read_text(encoding="utf-8"))
    std = standardize_and_align(doc, template=plan.template or None,
                                source_up=plan.source_up, target_up=plan.target_up)
    if std.flagged:
        logger.warning("%s: rest directions not matched for %s", path.name,
                       ", ".join(std.unmatched_joints))
    result = retarget(std.document, plan.mapping, skeleton)
    motion = result.motion
    if sigma > 0:
        motion = gaussian_smooth(motion, sigma)
    motion = resample(motion, 30.0)
    motion = normalize_clip(motion, skeleton)
    pieces = segment(motion)

    validity = np.ones(skeleton.joint_count, dtype=bool)
    validity[list(result.excluded_joints)] = False

    captions = _read_sidecar_captions(path.with_suffix(".captions.txt"))
    audio = _read_sidecar_audio(path.with_suffix(".audio.f32"))
    task_file = path.with_suffix(".task.txt")
    task = task_file.read_text(encoding="utf-8").strip() if task_file.exists() else "T2M"
    dataset = path.parent.name or "default"

    records: list[ClipRecord] = []
    audio_slices: dict[str, np.ndarray] = {}
    prev_id: str | None = None
    start = 0
    for i, piece in enumerate(pieces):
        clip_id = f"{dataset}_{path.stem}_{i:03d}"
        feats = extract_features(piece, skeleton, contact_threshold)
        stop = start + piece.frame_count
        audio_name = f"{clip_id}.audio.f32" if audio is not None else None
        rec = ClipRecord(
            clip_id=clip_id,
            source_dataset=dataset,
            task=task,
            features=feats,
            captions=list(captions),
            audio_path=audio_name,
            joint_validity=validity.copy(),
            face_present=piece.face is not None,
            prev_clip_id=prev_id,
        )
        if audio_name is not None:
            audio_slices[audio_name] = _slice_audio(audio, start, stop)
        records.append(rec)
        prev_id = clip_id
        start = stop
    return records, audio_slices


def _slice_audio(audio: np.ndarray | None, start: int, stop: int) -> np.ndarray | None:
    if audio is None:
        return None
    frames = stop - start
    out = np.zeros((frames, audio.shape[1]), dtype=np.float64)
    lo = min(start, audio.shape[0])
    hi = min(stop, audio.shape[0])
    if hi > lo:
        out[: hi - lo] = audio[lo:hi]
    return out


def ingest_directory(input_dir, skeleton: SkeletonSpec, plan: RetargetPlan,
                     out_store, sigma: float = 1.0, seed: int = 7,
                     test_per_dataset: int = 0,
                     contact_threshold: float = 0.002) -> ClipStore:
    """Ingest every BVH under ``input_dir`` into a new store; deterministic
    given identical inputs and seed."""
    input_dir = Path(input_dir)
    files = sorted(input_dir.rglob("*.bvh"))
    if not files:
        raise ValueError(f"no BVH files under {input_dir}")

    records: list[ClipRecord] = []
    audio_slices: dict[str, np.ndarray] = {}
    for path in files:
        recs, slices = ingest_file(path, skeleton, plan, sigma, contact_threshold)
        records.extend(recs)
        audio_slices.update(slices)

    manifest, updated = build_manifest(records, test_per_dataset=test_per_dataset,
                                       seed=seed)
    store = ClipStore(out_store)
    store.initialize(skeleton)
    with store.writer_lock():
        for rec in updated:
            store.write_clip(rec, skeleton)
            if rec.audio_path is not None:
                store.write_audio(rec.audio_path,
                                  audio_slices[rec.audio_path].astype(np.float32))
        store.write_manifest(manifest)
    logger.info("ingested %d clips from %d files into %s",
                len(updated), len(files), store.root)
    return store
