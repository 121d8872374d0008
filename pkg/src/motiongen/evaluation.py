"""Contrastive text-motion embedding model and the retrieval metric battery.

The embedders are small transformer encoders with one learned semantic token
whose output is the embedding. They are retrained per store, so absolute
metric values are store-specific; reports record the embedder checksum so
cross-run comparisons can pin it. Embeddings are not normalized before
metrics (recorded in the report header).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, load_model_tensors, model_tensors, save_checkpoint
from .conditions import ConditionBundle, HashedTextFeaturizer, MaskSet
from .diffusion import ddpm_sample
from .features import MotionFeatures, recover_motion
from .kinematics import forward_kinematics
from .model import Denoiser, EncoderLayer
from .schedule import NoiseSchedule
from .skeleton import SkeletonSpec
from .store import ClipStore

logger = logging.getLogger(__name__)


@dataclass
class EmbedderConfig:
    embed_dim: int = 64
    d_model: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    margin: float = 10.0
    text_vocab: int = 64
    max_text_tokens: int = 16
    max_frames: int = 150
    lr: float = 1e-3
    epochs: int = 40
    batch_size: int = 32

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(payload: dict) -> "EmbedderConfig":
        return EmbedderConfig(**payload)


class SequenceEmbedder(nn.Module):
    """Transformer encoder with a learned semantic token; the token's output
    is the sequence embedding."""

    def __init__(self, input_dim: int, config: EmbedderConfig, max_len: int):
        super().__init__()
        d = config.d_model
        self.input_proj = nn.Linear(input_dim, d)
        self.semantic_token = nn.Parameter(torch.randn(1, d) * 0.02)
        self.pos = nn.Parameter(torch.randn(max_len + 1, d) * 0.02)
        self.blocks = nn.ModuleList([
            EncoderLayer(d, config.heads, config.ff_dim, 0.0)
            for _ in range(config.layers)])
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.embed_dim)

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        b, length, _ = x.shape
        h = self.input_proj(x)
        sem = self.semantic_token.expand(b, 1, -1)
        h = torch.cat([sem, h], dim=1) + self.pos[: length + 1][None]
        if valid is None:
            ignore = torch.zeros(b, length + 1, dtype=torch.bool, device=x.device)
        else:
            ignore = torch.cat(
                [torch.zeros(b, 1, dtype=torch.bool, device=x.device), ~valid], dim=1)
        for block in self.blocks:
            h = block(h, ignore)
        return self.head(self.norm(h[:, 0]))


class EmbedderPair(nn.Module):
    """Paired text and motion encoders sharing one embedding space."""

    def __init__(self, config: EmbedderConfig, skeleton: SkeletonSpec):
        super().__init__()
        self.config = config
        self.skeleton = skeleton
        self.featurizer = HashedTextFeaturizer(config.text_vocab, config.max_text_tokens)
        self.text_encoder = SequenceEmbedder(config.text_vocab, config,
                                             config.max_text_tokens)
        self.motion_encoder = SequenceEmbedder(skeleton.feature_dim, config,
                                               config.max_frames)

    @torch.no_grad()
    def embed_texts(self, texts: list[str]) -> np.ndarray:
        rows = [self.featurizer.encode(t) for t in texts]
        length = max(r.shape[0] for r in rows)
        x = torch.zeros(len(rows), length, self.config.text_vocab)
        valid = torch.zeros(len(rows), length, dtype=torch.bool)
        for i, r in enumerate(rows):
            x[i, : r.shape[0]] = torch.from_numpy(r)
            valid[i, : r.shape[0]] = True
        return self.text_encoder(x, valid).cpu().numpy().astype(np.float64)

    @torch.no_grad()
    def embed_motions(self, motions: list[MotionFeatures]) -> np.ndarray:
        length = max(m.frame_count for m in motions)
        dim = self.skeleton.feature_dim
        x = torch.zeros(len(motions), length, dim)
        valid = torch.zeros(len(motions), length, dtype=torch.bool)
        for i, m in enumerate(motions):
            x[i, : m.frame_count] = torch.from_numpy(m.data)
            valid[i, : m.frame_count] = True
        return self.motion_encoder(x, valid).cpu().numpy().astype(np.float64)


def contrastive_loss(s_t, s_m, y, margin: float = 10.0):
    """Pairwise contrastive objective: matched pairs (y=0) pay squared
    distance, mismatched pairs (y=1) pay squared hinge shortfall below the
    margin. Returns the mean over the batch (scalar input passes through)."""
    s_t = torch.as_tensor(s_t, dtype=torch.get_default_dtype()) \
        if not isinstance(s_t, torch.Tensor) else s_t
    s_m = torch.as_tensor(s_m, dtype=s_t.dtype) \
        if not isinstance(s_m, torch.Tensor) else s_m
    if s_t.shape != s_m.shape:
        raise ValueError("embedding shapes must match")
    single = s_t.dim() == 1
    if single:
        s_t, s_m = s_t[None], s_m[None]
    y_t = torch.as_tensor(y, dtype=s_t.dtype).reshape(-1)
    dist = torch.linalg.vector_norm(s_t - s_m, dim=-1)
    hinge = torch.clamp(margin - dist, min=0.0)
    loss = (1.0 - y_t) * dist ** 2 + y_t * hinge ** 2
    return loss.mean()


def train_embedders(records, skeleton: SkeletonSpec, config: EmbedderConfig,
                    seed: int = 0) -> tuple[EmbedderPair, list[float]]:
    """Train the pair on matched (caption, motion) pairs with in-batch
    negatives formed by rolling the motions; deterministic given the seed."""
    pairs = [(r.captions[0], r.features) for r in records if r.captions]
    if not pairs:
        raise ValueError("store has no captioned clips to train embedders on")

    torch.manual_seed(seed)
    pair_model = EmbedderPair(config, skeleton)
    optimizer = torch.optim.Adam(pair_model.parameters(), lr=config.lr)
    rng = np.random.default_rng(seed)

    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            texts = [pairs[i][0] for i in idx]
            motions = [pairs[i][1] for i in idx]
            s_t = _embed_texts_grad(pair_model, texts)
            s_m = _embed_motions_grad(pair_model, motions)
            loss = contrastive_loss(s_t, s_m, torch.zeros(len(idx)), config.margin)
            # in-batch negatives by rolling; pairs that happen to share the
            # caption are not negatives and get dropped
            rolled = torch.roll(s_m, 1, dims=0)
            rolled_texts = texts[-1:] + texts[:-1]
            keep = [i for i, (a_txt, b_txt) in enumerate(zip(texts, rolled_texts))
                    if a_txt != b_txt]
            if keep:
                loss = loss + contrastive_loss(s_t[keep], rolled[keep],
                                               torch.ones(len(keep)), config.margin)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item()
            batches += 1
        epoch_losses.append(total / max(batches, 1))
    pair_model.eval()
    return pair_model, epoch_losses


def _embed_texts_grad(pair_model: EmbedderPair, texts: list[str]) -> torch.Tensor:
    rows = [pair_model.featurizer.encode(t) for t in texts]
    length = max(r.shape[0] for r in rows)
    x = torch.zeros(len(rows), length, pair_model.config.text_vocab)
    valid = torch.zeros(len(rows), length, dtype=torch.bool)
    for i, r in enumerate(rows):
        x[i, : r.shape[0]] = torch.from_numpy(r)
        valid[i, : r.shape[0]] = True
    return pair_model.text_encoder(x, valid)


def _embed_motions_grad(pair_model: EmbedderPair, motions: list[MotionFeatures]) -> torch.Tensor:
    length = max(m.frame_count for m in motions)
    x = torch.zeros(len(motions), length, pair_model.skeleton.feature_dim)
    valid = torch.zeros(len(motions), length, dtype=torch.bool)
    for i, m in enumerate(motions):
        x[i, : m.frame_count] = torch.from_numpy(m.data)
        valid[i, : m.frame_count] = True
    return pair_model.motion_encoder(x, valid)


def save_embedders(pair_model: EmbedderPair, path) -> str:
    from .curriculum import _skeleton_dict

    config = {"embedder_config": pair_model.config.to_dict(),
              "skeleton": _skeleton_dict(pair_model.skeleton)}
    return save_checkpoint(path, config, model_tensors(pair_model))


def load_embedders(path) -> tuple[EmbedderPair, str]:
    from .curriculum import skeleton_from_dict

    config, tensors, checksum = load_checkpoint(path)
    pair_model = EmbedderPair(EmbedderConfig.from_dict(config["embedder_config"]),
                              skeleton_from_dict(config["skeleton"]))
    load_model_tensors(pair_model, tensors)
    pair_model.eval()
    return pair_model, checksum


# ---------------------------------------------------------------------------
# metrics


def fid(a: np.ndarray, b: np.ndarray, regularization: float = 1e-6,
        strict: bool = True) -> float:
    """Frechet distance between Gaussian fits of two embedding sets.

    The matrix square root uses a symmetric eigendecomposition of
    S_a^(1/2) Sigma_b S_a^(1/2), which equals sqrtm(Sigma_a Sigma_b) in trace.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite embeddings")
    dim = a.shape[1]
    if strict and (a.shape[0] <= dim or b.shape[0] <= dim):
        raise ValueError(
            f"need more than {dim} samples per set for a stable covariance "
            f"(got {a.shape[0]} and {b.shape[0]}); lower the embedding dim "
            "or pass strict=False")

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)

    def cov(x: np.ndarray) -> np.ndarray:
        if x.shape[0] < 2:
            return regularization * np.eye(dim)
        return np.cov(x, rowvar=False) + regularization * np.eye(dim)

    cov_a = cov(a)
    cov_b = cov(b)

    def sym_sqrt(m: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)) @ vecs.T

    root_a = sym_sqrt(cov_a)
    cross = sym_sqrt(root_a @ cov_b @ root_a)
    value = float(np.sum((mu_a - mu_b) ** 2)
                  + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def retrieval_metrics(text_emb: np.ndarray, motion_emb: np.ndarray,
                      batch: int = 32, pools: int | None = None,
                      rng: np.random.Generator | None = None) -> dict[str, float]:
    """R-precision over fixed-size retrieval pools plus multimodal distance.

    By default one shuffle is partitioned into disjoint pools of ``batch``
    pairs; pass ``pools`` to draw that many pools instead."""
    text_emb = np.asarray(text_emb, dtype=np.float64)
    motion_emb = np.asarray(motion_emb, dtype=np.float64)
    n = text_emb.shape[0]
    if motion_emb.shape[0] != n:
        raise ValueError("text and motion embedding counts must match")
    if n < batch:
        raise ValueError(f"need at least {batch} pairs, got {n}")
    rng = rng or np.random.default_rng(0)

    if pools is None:
        order = rng.permutation(n)
        groups = [order[i * batch:(i + 1) * batch] for i in range(n // batch)]
    else:
        groups = [rng.choice(n, size=batch, replace=False) for _ in range(pools)]

    hits = np.zeros(3)
    for idx in groups:
        t = text_emb[idx]
        m = motion_emb[idx]
        dists = np.linalg.norm(t[:, None, :] - m[None, :, :], axis=-1)
        ranks = np.argsort(dists, axis=1)
        true_rank = np.argmax(ranks == np.arange(batch)[:, None], axis=1)
        for k in range(3):
            hits[k] += np.mean(true_rank <= k)
    hits /= len(groups)

    mm_dist = float(np.mean(np.linalg.norm(text_emb - motion_emb, axis=-1)))
    return {"r1": float(hits[0]), "r2": float(hits[1]), "r3": float(hits[2]),
            "mm_dist": mm_dist}


def diversity(embeddings: np.ndarray, pair_count: int = 300,
              rng: np.random.Generator | None = None) -> float:
    """Mean distance over random disjoint pairs, capped at floor(n/2)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if pair_count < 1:
        raise ValueError("pair_count must be positive")
    n = embeddings.shape[0]
    pairs = min(pair_count, n // 2)
    if pairs < 1:
        raise ValueError("need at least 2 embeddings")
    rng = rng or np.random.default_rng(0)
    order = rng.permutation(n)
    first = embeddings[order[:pairs]]
    second = embeddings[order[pairs:2 * pairs]]
    return float(np.mean(np.linalg.norm(first - second, axis=-1)))


def multimodality(per_condition: np.ndarray) -> float:
    """Mean pairwise distance among same-condition generations, averaged over
    conditions. Input shape (conditions, repeats, dim)."""
    per_condition = np.asarray(per_condition, dtype=np.float64)
    if per_condition.ndim != 3 or per_condition.shape[1] < 2:
        raise ValueError("need shape (conditions, repeats>=2, dim)")
    c, r, _ = per_condition.shape
    total, count = 0.0, 0
    for i in range(c):
        block = per_condition[i]
        d = np.linalg.norm(block[:, None, :] - block[None, :, :], axis=-1)
        iu = np.triu_indices(r, k=1)
        total += d[iu].sum()
        count += len(iu[0])
    return float(total / count)


def subset_fid_and_face_mse(generated: list[MotionFeatures],
                            reference: list[MotionFeatures],
                            joint_subset: tuple[int, ...],
                            skeleton: SkeletonSpec,
                            embed_fn=None) -> tuple[float, float]:
    """FID over per-clip statistics of the subset joints' position
    trajectories (raw-feature Gaussian FID unless ``embed_fn`` is given),
    plus mean squared error over the face coefficients of aligned pairs."""
    if not joint_subset:
        raise ValueError("joint subset must not be empty")
    if len(generated) != len(reference):
        raise ValueError("generated and reference clip lists must align")

    def clip_stats(motions: list[MotionFeatures]) -> np.ndarray:
        rows = []
        for feats in motions:
            motion = recover_motion(feats, skeleton)
            positions = forward_kinematics(skeleton, motion.root_translation,
                                           motion.local_rotations)
            sub = positions[:, list(joint_subset)].reshape(feats.frame_count, -1)
            rows.append(np.concatenate([sub.mean(axis=0), sub.std(axis=0)]))
        return np.stack(rows)

    if embed_fn is not None:
        gen_emb = np.asarray([embed_fn(m) for m in generated])
        ref_emb = np.asarray([embed_fn(m) for m in reference])
    else:
        gen_emb = clip_stats(generated)
        ref_emb = clip_stats(reference)
    subset_fid = fid(gen_emb, ref_emb, strict=False)

    from .features import FeatureLayout

    layout = FeatureLayout(skeleton)
    face_err, count = 0.0, 0
    for g, r in zip(generated, reference):
        frames = min(g.frame_count, r.frame_count)
        diff = g.data[:frames, layout.face] - r.data[:frames, layout.face]
        face_err += float(np.sum(diff.astype(np.float64) ** 2))
        count += diff.size
    return subset_fid, face_err / max(count, 1)


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class MetricReport:
    metrics: dict[str, tuple[float, float]]     # name -> (mean, ci95 half-width)
    repeats: int
    seed: int
    embedder_checksum: str
    notes: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            "# benchmark report",
            f"# repeats: {self.repeats}",
            f"# seed: {self.seed}",
            f"# embedders: {self.embedder_checksum}",
            "# embeddings are used unnormalized",
        ]
        for key, value in sorted(self.notes.items()):
            lines.append(f"# {key}: {value}")
        lines.append(f"{'metric':<24}{'mean':>14}{'ci95':>14}")
        for name, (mean, ci) in self.metrics.items():
            lines.append(f"{name:<24}{mean:>14.6f}{ci:>14.6f}")
        return "\n".join(lines) + "\n"


def _mean_ci(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    half = 1.96 * float(arr.std(ddof=1)) / np.sqrt(len(arr))
    return mean, half


# Full-scale reference magnitudes for the retrieval battery, recorded from
# the production-scale evaluation as sanity scales only; desk-scale stores
# retrain their own embedders, so absolute values are not comparable.
REFERENCE_SCALE = {
    "gt_r1": 0.535,
    "gt_r2": 0.725,
    "gt_r3": 0.821,
    "gt_fid": 0.013,
    "gt_mm_dist": 2.493,
    "gt_diversity": 9.194,
}

BENCHMARK_TASKS = ("t2m", "gstc", "s2g", "m2d")


def _task_records(task: str, records: list[ClipRecord]) -> list[ClipRecord]:
    if task in ("t2m", "gstc"):
        return [r for r in records if r.captions]
    if task == "s2g":
        return [r for r in records if r.task == "S2G" and r.audio_path]
    return [r for r in records if r.task == "M2D" and r.audio_path]


def run_benchmark(model: Denoiser, schedule: NoiseSchedule, store: ClipStore,
                  embedders: EmbedderPair, repeats: int = 20, seed: int = 7,
                  pool: int = 32, tasks: tuple[str, ...] = ("t2m",),
                  mm_conditions: int = 5, mm_repeats: int = 10,
                  gt_row: bool = False, gstc_prefix: int = 30,
                  embedder_checksum: str = "unpinned") -> MetricReport:
    """Benchmark over the store's test split.

    Per repeat and task, generate one motion per eligible test clip, embed,
    and compute the metric battery; report mean and 95% confidence interval
    over repeats. Tasks without eligible conditions are skipped with a
    warning. t2m/gstc report the retrieval battery; s2g/m2d report
    whole-body and hand subset FIDs (plus face MSE for s2g) and diversity.
    """
    skeleton = store.skeleton()
    all_records = [store.read_clip(cid) for cid in store.clip_ids("test")]
    if not any(_task_records(t, all_records) for t in tasks):
        raise ValueError("test split has no eligible clips for the requested tasks")

    per_metric: dict[str, list[float]] = {}
    notes: dict = {"gt_row": gt_row, "tasks": ",".join(tasks)}

    def record(name: str, value: float) -> None:
        per_metric.setdefault(name, []).append(value)

    def sample_clip(bundle: ConditionBundle, masks: MaskSet, frames: int,
                    clip_seed: int, observed=None, observed_mask=None) -> MotionFeatures:
        out = ddpm_sample(model, bundle, masks, schedule, frames=frames,
                          seed=clip_seed, observed_values=observed,
                          observed_mask=observed_mask)
        return MotionFeatures(out.cpu().numpy().astype(np.float32), 30.0)

    import torch as _torch

    from .features import FeatureLayout
    from .masks import TaskMaskSpec, make_task_mask

    layout = FeatureLayout(skeleton)

    for task in tasks:
        if task not in BENCHMARK_TASKS:
            raise ValueError(f"unknown benchmark task {task!r}")
        records = _task_records(task, all_records)
        if not records:
            logger.warning("task %s: no eligible test clips; skipped", task)
            notes[f"{task}_skipped"] = "no eligible conditions"
            continue
        frames = min(min(r.frame_count for r in records), model.config.max_frames)
        gt_motions = [r.features for r in records]
        gt_aligned = [MotionFeatures(m.data[:frames].copy(), 30.0) for m in gt_motions]
        gt_emb = embedders.embed_motions(gt_motions)
        captions = [rec.captions[0] for rec in records if rec.captions]
        text_emb = embedders.embed_texts(captions) if captions else None
        task_tag = BENCHMARK_TASKS.index(task)
        notes[f"{task}_clips"] = len(records)

        def generate(seed_value: int) -> list[MotionFeatures]:
            out = []
            for i, rec in enumerate(records):
                clip_seed = int(np.random.SeedSequence(
                    [seed_value, task_tag, i]).generate_state(1)[0])
                bundle = ConditionBundle(text=rec.captions[0] if rec.captions else None)
                masks = MaskSet()
                observed = observed_mask = None
                if task == "gstc":
                    prefix = min(gstc_prefix, max(1, frames - 1))
                    spec = TaskMaskSpec("predict", prefix_frames=prefix)
                    joint_mask = make_task_mask(spec, skeleton, frames)
                    cond = np.zeros((frames, layout.dim), dtype=np.float32)
                    cond[:] = rec.features.data[:frames]
                    bundle.global_motion = MotionFeatures(cond, 30.0)
                    masks = MaskSet(task_mask=joint_mask, task_kind="predict")
                    observed_mask = _torch.from_numpy(
                        layout.expand_joint_mask(joint_mask))
                    observed = _torch.from_numpy(cond)
                elif task in ("s2g", "m2d"):
                    audio = store.read_audio(rec.audio_path)
                    rows = np.zeros((frames, audio.shape[1]), dtype=np.float32)
                    rows[: min(frames, len(audio))] = audio[:frames]
                    if task == "s2g":
                        bundle.speech = rows
                    else:
                        bundle.music = rows
                out.append(sample_clip(bundle, masks, frames, clip_seed,
                                       observed, observed_mask))
            return out

        for r in range(repeats):
            rng = np.random.default_rng(seed * 1000 + r)
            generated = gt_aligned if gt_row else generate(seed + r)
            if task in ("t2m", "gstc"):
                gen_emb = gt_emb if gt_row else embedders.embed_motions(generated)
                record(f"{task}/fid", fid(gt_emb, gen_emb, strict=False))
                eff_pool = min(pool, len(records))
                retrieval = retrieval_metrics(text_emb, gen_emb, batch=eff_pool,
                                              rng=rng)
                for key in ("r1", "r2", "r3", "mm_dist"):
                    record(f"{task}/{key}", retrieval[key])
                record(f"{task}/diversity", diversity(gen_emb, rng=rng))
            else:
                whole = tuple(range(skeleton.joint_count))
                fid_whole, face_mse = subset_fid_and_face_mse(
                    generated, gt_aligned, whole, skeleton)
                record(f"{task}/fid_whole", fid_whole)
                if skeleton.hand_joints:
                    fid_hands, _ = subset_fid_and_face_mse(
                        generated, gt_aligned, tuple(skeleton.hand_joints), skeleton)
                    record(f"{task}/fid_hands", fid_hands)
                if task == "s2g":
                    record(f"{task}/face_mse", face_mse)
                gen_emb = embedders.embed_motions(generated)
                record(f"{task}/diversity", diversity(gen_emb, rng=rng))

        if task in ("t2m", "gstc") and mm_conditions > 0 and not gt_row:
            blocks = []
            for c in range(min(mm_conditions, len(captions))):
                reps = []
                for k in range(mm_repeats):
                    clip_seed = int(np.random.SeedSequence(
                        [seed, 10_000 + c, k]).generate_state(1)[0])
                    reps.append(sample_clip(
                        ConditionBundle(text=captions[c]), MaskSet(), frames,
                        clip_seed))
                blocks.append(embedders.embed_motions(reps))
            per_metric[f"{task}/multimodality"] = [multimodality(np.stack(blocks))]

    metrics = {name: _mean_ci(values) for name, values in per_metric.items()}
    return MetricReport(metrics=metrics, repeats=repeats, seed=seed,
                        embedder_checksum=embedder_checksum, notes=notes)
