"""Weak-to-strong progressive training.

Stages enable condition channels cumulatively (text, then reference motion,
then global spatial-temporal control, then audio). Budgets and batch sizes
default to the production settings (460K/460K/230K/920K steps at batches
48/48/48/16); a single scale factor sigma shrinks every budget
proportionally, so desk runs keep the stage proportions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    decode_rng_state,
    encode_rng_state,
    load_checkpoint,
    load_model_tensors,
    load_optimizer_tensors,
    model_tensors,
    optimizer_tensors,
    save_checkpoint,
)
from .conditions import ConditionBundle, MaskSet
from .diffusion import training_loss
from .features import MotionFeatures
from .masks import TASK_KINDS, TaskMaskSpec, make_task_mask
from .model import Denoiser, ModelConfig, build_denoiser
from .schedule import build_schedule
from .skeleton import SkeletonSpec
from .store import ClipRecord, ClipStore

logger = logging.getLogger(__name__)

BASE_DECAY_STEPS = 460_000
REFERENCE_WINDOW = 150


@dataclass(frozen=True)
class StageSpec:
    name: str
    channels: tuple[str, ...]
    steps: int
    batch_size: int
    lr_init: float = 1e-4
    lr_floor: float = 1e-5
    dropout: float = 0.1
    disentangle_prob: float = 0.5


@dataclass(frozen=True)
class CurriculumSpec:
    stages: tuple[StageSpec, ...]
    sigma: float = 1.0

    def __post_init__(self):
        enabled: set[str] = set()
        for stage in self.stages:
            if not enabled.issubset(set(stage.channels)):
                raise ValueError("stage channel sets must be monotone non-decreasing")
            enabled = set(stage.channels)
            if stage.steps <= 0:
                raise ValueError("stage step budget must be positive")

    def scaled_steps(self, stage: StageSpec) -> int:
        return max(1, round(stage.steps * self.sigma))

    @property
    def decay_horizon(self) -> int:
        return max(1, round(BASE_DECAY_STEPS * self.sigma))

    @staticmethod
    def paper_default(sigma: float = 1.0) -> "CurriculumSpec":
        return CurriculumSpec(stages=(
            StageSpec("text", ("text",), 460_000, 48),
            StageSpec("reference", ("text", "reference"), 460_000, 48),
            StageSpec("global", ("text", "reference", "global"), 230_000, 48),
            StageSpec("audio", ("text", "reference", "global", "speech", "music"),
                      920_000, 16),
        ), sigma=sigma)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "stages": [{
                "name": s.name, "channels": list(s.channels), "steps": s.steps,
                "batch_size": s.batch_size, "lr_init": s.lr_init,
                "lr_floor": s.lr_floor, "dropout": s.dropout,
                "disentangle_prob": s.disentangle_prob,
            } for s in self.stages],
        }

    @staticmethod
    def from_dict(payload: dict) -> "CurriculumSpec":
        stages = tuple(StageSpec(
            name=s["name"], channels=tuple(s["channels"]), steps=s["steps"],
            batch_size=s["batch_size"], lr_init=s.get("lr_init", 1e-4),
            lr_floor=s.get("lr_floor", 1e-5), dropout=s.get("dropout", 0.1),
            disentangle_prob=s.get("disentangle_prob", 0.5),
        ) for s in payload["stages"])
        return CurriculumSpec(stages, sigma=payload.get("sigma", 1.0))


def save_curriculum(spec: CurriculumSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_curriculum(path) -> CurriculumSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return CurriculumSpec.from_dict(json.load(fh))


def lr_at(step: int, horizon: int, lr_init: float = 1e-4,
          lr_floor: float = 1e-5) -> float:
    """Cosine decay from lr_init to lr_floor over ``horizon`` steps within a
    stage, constant floor afterwards. Step counts from the stage start."""
    if step < 0:
        raise ValueError("step must be non-negative")
    if step >= horizon:
        return lr_floor
    cos = np.cos(np.pi * step / horizon)
    return lr_floor + (lr_init - lr_floor) * 0.5 * (1.0 + cos)


# ---------------------------------------------------------------------------
# training data access


@dataclass
class TrainingData:
    """In-memory view of a store's training split."""

    skeleton: SkeletonSpec
    records: list[ClipRecord]
    audio: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {r.clip_id: r for r in self.records}

    @staticmethod
    def from_store(store: ClipStore, split: str = "train") -> "TrainingData":
        skeleton = store.skeleton()
        records = [store.read_clip(cid) for cid in store.clip_ids(split)]
        audio = {}
        for r in records:
            if r.audio_path is not None:
                audio[r.clip_id] = store.read_audio(r.audio_path)
        return TrainingData(skeleton, records, audio)

    def provides(self, record: ClipRecord, channel: str) -> bool:
        if channel == "text":
            return bool(record.captions)
        if channel == "reference":
            return record.prev_clip_id in self.by_id
        if channel == "global":
            return True
        if channel == "speech":
            return record.task == "S2G" and record.clip_id in self.audio
        if channel == "music":
            return record.task == "M2D" and record.clip_id in self.audio
        raise ValueError(f"unknown channel {channel!r}")

    def eligible(self, stage: StageSpec) -> list[ClipRecord]:
        return [r for r in self.records
                if any(self.provides(r, c) for c in stage.channels)]


def _random_task_spec(rng: np.random.Generator, frames: int,
                      joint_count: int) -> TaskMaskSpec:
    kind = TASK_KINDS[int(rng.integers(len(TASK_KINDS)))]
    if kind == "predict":
        return TaskMaskSpec("predict", prefix_frames=int(rng.integers(1, max(2, frames))))
    if kind == "inbetween":
        p = int(rng.integers(1, max(2, frames // 2)))
        s = int(rng.integers(1, max(2, frames - p)))
        return TaskMaskSpec("inbetween", prefix_frames=p, suffix_frames=s)
    if kind == "complete":
        count = int(rng.integers(1, 16))
        cells = tuple((int(rng.integers(frames)), int(rng.integers(joint_count)))
                      for _ in range(count))
        return TaskMaskSpec("complete", cells=cells)
    if kind == "trajectory":
        return TaskMaskSpec("trajectory")
    return TaskMaskSpec("dense")


def next_batch(data: TrainingData, stage: StageSpec, rng: np.random.Generator):
    """Sample one training batch.

    Eligible clips intersect the stage's enabled channels; each enabled
    channel the clip provides is independently included with probability
    1 - dropout. Returns (x0 (B,F,D), bundles, masksets, frame_valid,
    face_present)."""
    skeleton = data.skeleton
    eligible = data.eligible(stage)
    if not eligible:
        raise ValueError(
            f"stage {stage.name!r}: no clips provide any of {stage.channels}")
    picks = [eligible[int(i)] for i in rng.integers(len(eligible), size=stage.batch_size)]

    frames = max(r.frame_count for r in picks)
    dim = skeleton.feature_dim
    x0 = np.zeros((stage.batch_size, frames, dim), dtype=np.float32)
    frame_valid = np.zeros((stage.batch_size, frames), dtype=bool)
    bundles: list[ConditionBundle] = []
    masksets: list[MaskSet] = []
    face_present: list[bool] = []

    for i, record in enumerate(picks):
        f = record.frame_count
        x0[i, :f] = record.features.data
        frame_valid[i, :f] = True
        face_present.append(record.face_present)

        bundle = ConditionBundle()
        masks = MaskSet()
        if record.joint_validity is not None and not record.joint_validity.all():
            recon = np.broadcast_to(record.joint_validity[None, :],
                                    (frames, skeleton.joint_count)).copy()
            masks.recon_mask = recon

        for channel in ("text", "global", "speech", "music", "reference"):
            if channel not in stage.channels or not data.provides(record, channel):
                continue
            if rng.random() < stage.dropout:
                continue
            if channel == "text":
                bundle.text = record.captions[int(rng.integers(len(record.captions)))]
            elif channel == "global":
                spec = _random_task_spec(rng, f, skeleton.joint_count)
                masks.task_mask = make_task_mask(spec, skeleton, f)
                masks.task_kind = spec.kind
                if rng.random() < stage.disentangle_prob and skeleton.key_joints:
                    dis = np.zeros(skeleton.joint_count, dtype=bool)
                    dis[list(skeleton.key_joints)] = True
                    masks.disentangle = dis
                bundle.global_motion = MotionFeatures(record.features.data.copy(),
                                                      record.features.fps)
            elif channel == "speech":
                bundle.speech = data.audio[record.clip_id][:f].astype(np.float32)
            elif channel == "music":
                bundle.music = data.audio[record.clip_id][:f].astype(np.float32)
            elif channel == "reference":
                prev = data.by_id[record.prev_clip_id]
                window = prev.features.data[-REFERENCE_WINDOW:]
                bundle.reference_motion = MotionFeatures(window.copy(),
                                                         prev.features.fps)
        if bundle.speech is not None and bundle.music is not None:
            bundle.music = None  # speech xor music; speech wins deterministically
        bundles.append(bundle)
        masksets.append(masks)

    return x0, bundles, masksets, frame_valid, face_present


# ---------------------------------------------------------------------------
# stage execution


@dataclass
class TrainerState:
    model: Denoiser
    torch_gen: torch.Generator
    np_rng: np.random.Generator
    stage_index: int = 0
    step_in_stage: int = 0
    opt_tensors: dict | None = None
    opt_scalars: dict | None = None


def _log_line(fh, step: int, stage: str, loss: float, lr: float) -> None:
    fh.write(f"step={step} stage={stage} loss={loss!r} lr={lr!r}\n")
    fh.flush()


def train_curriculum(config: ModelConfig, skeleton: SkeletonSpec,
                     curriculum: CurriculumSpec, store: ClipStore,
                     out_dir, seed: int = 7,
                     resume: str | Path | None = None,
                     checkpoint_every: int | None = None,
                     data: TrainingData | None = None) -> Path:
    """Run every curriculum stage; returns the final checkpoint path.

    Checkpoints carry model and optimizer tensors plus both RNG states, so a
    resumed run continues bit-identically to an uninterrupted one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = data or TrainingData.from_store(store)
    schedule = build_schedule(config.schedule_steps, config.schedule_kind)

    if resume is not None:
        state = _restore(resume, skeleton)
        config = state.model.config
    else:
        model = build_denoiser(config, skeleton, seed=seed)
        torch_gen = torch.Generator()
        torch_gen.manual_seed(seed + 1)
        torch.manual_seed(seed + 2)
        state = TrainerState(model, torch_gen, np.random.default_rng(seed + 3))

    log_path = out_dir / "train.log"
    latest = out_dir / "latest.ckpt"
    named = list(state.model.named_parameters())

    with open(log_path, "a", encoding="utf-8") as log:
        for stage_index in range(state.stage_index, len(curriculum.stages)):
            stage = curriculum.stages[stage_index]
            budget = curriculum.scaled_steps(stage)
            horizon = curriculum.decay_horizon
            optimizer = torch.optim.AdamW(state.model.parameters(),
                                          lr=stage.lr_init, betas=(0.9, 0.999),
                                          weight_decay=0.01)
            if state.opt_tensors:
                load_optimizer_tensors(optimizer, named, state.opt_tensors,
                                       state.opt_scalars)
                state.opt_tensors = None

            start = state.step_in_stage
            for step in range(start, budget):
                lr = lr_at(step, horizon, stage.lr_init, stage.lr_floor)
                for group in optimizer.param_groups:
                    group["lr"] = lr

                x0_np, bundles, masksets, valid_np, face = next_batch(
                    data, stage, state.np_rng)
                x0 = torch.from_numpy(x0_np)
                valid = torch.from_numpy(valid_np)
                loss = training_loss(state.model, x0, bundles, masksets,
                                     schedule, state.torch_gen,
                                     frame_valid=valid, face_present=face)
                if not torch.isfinite(loss):
                    logger.error("non-finite loss at stage %s step %d; aborting "
                                 "with last checkpoint retained", stage.name, step)
                    raise FloatingPointError(
                        f"non-finite training loss at stage {stage.name} step {step}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                _log_line(log, step, stage.name, loss.item(), lr)
                state.step_in_stage = step + 1
                if checkpoint_every and (step + 1) % checkpoint_every == 0:
                    _save(latest, state, optimizer, named, stage_index, step + 1, seed)

            state.stage_index = stage_index + 1
            state.step_in_stage = 0
            _save(latest, state, optimizer, named, stage_index + 1, 0, seed)

    return latest


def _save(path: Path, state: TrainerState, optimizer, named,
          stage_index: int, step_in_stage: int, seed: int) -> None:
    from .skeleton import save_skeleton
    import io
    import json as _json

    tensors = model_tensors(state.model)
    opt_t, opt_s = optimizer_tensors(optimizer, named)
    tensors.update(opt_t)

    skeleton = state.model.skeleton
    config = {
        "model_config": state.model.config.to_dict(),
        "skeleton": _skeleton_dict(skeleton),
        "stage_index": stage_index,
        "step_in_stage": step_in_stage,
        "seed": seed,
        "opt_scalars": opt_s,
        "rng": encode_rng_state(state.torch_gen, state.np_rng),
        "torch_global_rng": encode_rng_state(_global_gen(), state.np_rng)["torch"],
    }
    save_checkpoint(path, config, tensors)


def _global_gen() -> torch.Generator:
    gen = torch.Generator()
    gen.set_state(torch.get_rng_state())
    return gen


def _skeleton_dict(skeleton: SkeletonSpec) -> dict:
    return {
        "name": skeleton.name,
        "joint_names": list(skeleton.joint_names),
        "parent_index": list(skeleton.parent_index),
        "rest_offsets": [[float(v) for v in row] for row in skeleton.rest_offsets],
        "rotated_joints": list(skeleton.rotated_joints),
        "heel_joints": list(skeleton.heel_joints),
        "toe_joints": list(skeleton.toe_joints),
        "hand_joints": list(skeleton.hand_joints),
        "key_joints": list(skeleton.key_joints),
        "body_parts": [list(p) for p in skeleton.body_parts],
        "up_axis": skeleton.up_axis,
    }


def skeleton_from_dict(payload: dict) -> SkeletonSpec:
    return SkeletonSpec(
        joint_names=tuple(payload["joint_names"]),
        parent_index=tuple(payload["parent_index"]),
        rest_offsets=np.asarray(payload["rest_offsets"], dtype=np.float64),
        rotated_joints=tuple(payload["rotated_joints"]),
        heel_joints=tuple(payload["heel_joints"]),
        toe_joints=tuple(payload["toe_joints"]),
        hand_joints=tuple(payload["hand_joints"]),
        key_joints=tuple(payload["key_joints"]),
        body_parts=tuple(tuple(p) for p in payload["body_parts"]),
        up_axis=payload["up_axis"],
        name=payload.get("name", "skeleton"),
    )


def load_trained_model(path) -> tuple[Denoiser, dict, str]:
    """Load a checkpoint into a fresh model; returns (model, config, checksum)."""
    config, tensors, checksum = load_checkpoint(path)
    skeleton = skeleton_from_dict(config["skeleton"])
    model = Denoiser(ModelConfig.from_dict(config["model_config"]), skeleton)
    load_model_tensors(model, tensors)
    model.eval()
    return model, config, checksum


def _restore(path, skeleton: SkeletonSpec) -> TrainerState:
    import base64

    config, tensors, _ = load_checkpoint(path)
    model = Denoiser(ModelConfig.from_dict(config["model_config"]), skeleton)
    load_model_tensors(model, tensors)

    torch_gen = torch.Generator()
    np_rng = np.random.default_rng(0)
    decode_rng_state(config["rng"], torch_gen, np_rng)
    raw = base64.b64decode(config["torch_global_rng"])
    torch.set_rng_state(torch.tensor(np.frombuffer(raw, dtype=np.uint8)))

    opt_tensors = {k: v for k, v in tensors.items() if k.startswith("opt.")}
    return TrainerState(
        model=model,
        torch_gen=torch_gen,
        np_rng=np_rng,
        stage_index=config["stage_index"],
        step_in_stage=config["step_in_stage"],
        opt_tensors=opt_tensors or None,
        opt_scalars=config.get("opt_scalars") or {},
    )
