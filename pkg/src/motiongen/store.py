"""Clip container format and the on-disk clip store.

Container layout (little-endian): magic "MOCL", u32 version, u32 N, u32 N',
u32 D, u32 fps, u32 frame_count, then frame-major float32 features, then a
u32-length-prefixed JSON metadata block (captions, tags, validity masks).
JSON is written with sorted keys so stores are byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features import MotionFeatures
from .skeleton import SkeletonSpec, load_skeleton, save_skeleton

logger = logging.getLogger(__name__)

MAGIC = b"MOCL"
VERSION = 1
TASKS = ("T2M", "M2D", "S2G", "HOI", "HSI", "HHI")


@dataclass
class ClipRecord:
    clip_id: str
    source_dataset: str
    task: str
    features: MotionFeatures
    captions: list[str] = field(default_factory=list)
    audio_path: str | None = None
    split: str = "train"
    joint_validity: np.ndarray | None = None    # (N,) bool; None = all valid
    face_present: bool = False
    prev_clip_id: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task tag {self.task!r}; expected one of {TASKS}")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        if not self.captions and self.audio_path is None:
            raise ValueError(f"clip {self.clip_id}: needs at least one caption or an audio attachment")
        if self.joint_validity is not None:
            self.joint_validity = np.asarray(self.joint_validity, dtype=bool)

    @property
    def frame_count(self) -> int:
        return self.features.frame_count


def write_clip_bytes(record: ClipRecord, skeleton: SkeletonSpec) -> bytes:
    feats = record.features
    if feats.dim != skeleton.feature_dim:
        raise ValueError("clip feature dim does not match skeleton")
    header = MAGIC + struct.pack(
        "<6I", VERSION, skeleton.joint_count, skeleton.rotated_count,
        feats.dim, int(round(feats.fps)), feats.frame_count)
    body = feats.data.astype("<f4").tobytes(order="C")
    validity = (record.joint_validity if record.joint_validity is not None
                else np.ones(skeleton.joint_count, dtype=bool))
    meta = {
        "clip_id": record.clip_id,
        "source_dataset": record.source_dataset,
        "task": record.task,
        "captions": record.captions,
        "audio_path": record.audio_path,
        "split": record.split,
        "joint_validity": [int(v) for v in validity],
        "face_present": record.face_present,
        "prev_clip_id": record.prev_clip_id,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return header + body + struct.pack("<I", len(meta_bytes)) + meta_bytes


def read_clip_bytes(blob: bytes) -> tuple[ClipRecord, dict]:
    if blob[:4] != MAGIC:
        raise ValueError("not a clip container (bad magic)")
    version, n, n_rot, dim, fps, frames = struct.unpack_from("<6I", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported clip container version {version}")
    off = 4 + 24
    count = frames * dim
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(frames, dim)
    off += count * 4
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    meta = json.loads(blob[off:off + meta_len].decode("utf-8"))
    record = ClipRecord(
        clip_id=meta["clip_id"],
        source_dataset=meta["source_dataset"],
        task=meta["task"],
        features=MotionFeatures(data.copy(), float(fps)),
        captions=list(meta["captions"]),
        audio_path=meta["audio_path"],
        split=meta["split"],
        joint_validity=np.asarray(meta["joint_validity"], dtype=bool),
        face_present=bool(meta["face_present"]),
        prev_clip_id=meta["prev_clip_id"],
    )
    dims = {"joint_count": n, "rotated_count": n_rot, "dim": dim}
    return record, dims


@dataclass
class DatasetManifest:
    clips: list[dict]                   # ordered header dicts
    dataset_counts: dict[str, int]
    split_counts: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(
            {"clips": self.clips, "dataset_counts": self.dataset_counts,
             "split_counts": self.split_counts},
            sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        payload = json.loads(text)
        return DatasetManifest(payload["clips"], payload["dataset_counts"],
                               payload["split_counts"])


def build_manifest(records: list[ClipRecord], test_per_dataset: int = 10,
                   seed: int = 7) -> tuple[DatasetManifest, list[ClipRecord]]:
    """Assign splits (seeded uniform sample of test_per_dataset clips per
    dataset into test) and summarize. Returns (manifest, updated records)."""
    ids = [r.clip_id for r in records]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate clip_id {dup!r}")

    by_dataset: dict[str, list[ClipRecord]] = {}
    for r in records:
        by_dataset.setdefault(r.source_dataset, []).append(r)

    rng = np.random.default_rng(seed)
    assigned: dict[str, str] = {}
    for dataset in sorted(by_dataset):
        group = sorted(by_dataset[dataset], key=lambda r: r.clip_id)
        if len(group) <= test_per_dataset:
            if len(group) < test_per_dataset:
                logger.warning("dataset %s has only %d clips; all go to the test split",
                               dataset, len(group))
            chosen = set(range(len(group)))
        else:
            chosen = set(rng.choice(len(group), size=test_per_dataset, replace=False).tolist())
        for i, r in enumerate(group):
            assigned[r.clip_id] = "test" if i in chosen else "train"

    updated = [replace(r, split=assigned[r.clip_id]) for r in records]
    headers = [
        {
            "clip_id": r.clip_id,
            "source_dataset": r.source_dataset,
            "task": r.task,
            "frame_count": r.frame_count,
            "caption_count": len(r.captions),
            "has_audio": r.audio_path is not None,
            "split": r.split,
            "prev_clip_id": r.prev_clip_id,
        }
        for r in updated
    ]
    dataset_counts = {d: len(g) for d, g in sorted(by_dataset.items())}
    split_counts = {"train": sum(1 for r in updated if r.split == "train"),
                    "test": sum(1 for r in updated if r.split == "test")}
    return DatasetManifest(headers, dataset_counts, split_counts), updated


class ClipStore:
    """Directory of clip containers plus skeleton and manifest files.

    Reads are lock-free; writes take an exclusive lock file so a single
    writer updates the manifest at a time.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def skeleton_path(self) -> Path:
        return self.root / "skeleton.json"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def clip_path(self, clip_id: str) -> Path:
        return self.root / "clips" / f"{clip_id}.clip"

    def audio_path(self, name: str) -> Path:
        return self.root / "audio" / name

    @contextmanager
    def writer_lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        lock = self.root / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(f"store {self.root} is locked by another writer")
        try:
            yield
        finally:
            os.close(fd)
            lock.unlink(missing_ok=True)

    def initialize(self, skeleton: SkeletonSpec) -> None:
        (self.root / "clips").mkdir(parents=True, exist_ok=True)
        (self.root / "audio").mkdir(parents=True, exist_ok=True)
        save_skeleton(skeleton, self.skeleton_path)

    def skeleton(self) -> SkeletonSpec:
        return load_skeleton(self.skeleton_path)

    MAX_CLIP_FRAMES = 150

    def write_clip(self, record: ClipRecord, skeleton: SkeletonSpec) -> None:
        if record.frame_count > self.MAX_CLIP_FRAMES:
            raise ValueError(
                f"clip {record.clip_id} has {record.frame_count} frames; "
                f"stored clips are capped at {self.MAX_CLIP_FRAMES}")
        if round(record.features.fps) != 30:
            raise ValueError(f"clip {record.clip_id}: stored clips must be 30 fps")
        path = self.clip_path(record.clip_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(write_clip_bytes(record, skeleton))

    def read_clip(self, clip_id: str) -> ClipRecord:
        record, _ = read_clip_bytes(self.clip_path(clip_id).read_bytes())
        return record

    def write_manifest(self, manifest: DatasetManifest) -> None:
        self.manifest_path.write_text(manifest.to_json(), encoding="utf-8")

    def manifest(self) -> DatasetManifest:
        return DatasetManifest.from_json(self.manifest_path.read_text(encoding="utf-8"))

    def clip_ids(self, split: str | None = None) -> list[str]:
        manifest = self.manifest()
        return [c["clip_id"] for c in manifest.clips
                if split is None or c["split"] == split]

    def write_audio(self, name: str, features: np.ndarray) -> str:
        """Frame-major float32 attachment with a (frame_count, feature_dim)
        integer header."""
        features = np.asarray(features, dtype="<f4")
        path = self.audio_path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(struct.pack("<2I", features.shape[0], features.shape[1]))
            fh.write(features.tobytes(order="C"))
        return name

    def read_audio(self, name: str) -> np.ndarray:
        blob = self.audio_path(name).read_bytes()
        frames, dim = struct.unpack_from("<2I", blob, 0)
        return np.frombuffer(blob, dtype="<f4", count=frames * dim,
                             offset=8).reshape(frames, dim).astype(np.float64)
