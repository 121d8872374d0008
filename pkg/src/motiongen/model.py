"""Prefix-conditioned denoising transformer.

Condition tokens (text, global motion, speech, music, reference motion — in
that order) are projected into the model width and concatenated in front of
the noisy motion tokens. Motion frames are embedded body-part-wise: each
part's feature columns map to a d_model/P slice, and the readout inverts the
same partition. Absent channels occupy learned null tokens whose positions
are excluded from attention, so their content cannot influence the output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .conditions import CHANNELS, ConditionBundle, HashedTextFeaturizer, MaskSet
from .features import FeatureLayout
from .skeleton import SkeletonSpec

MAX_FRAMES = 150


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 4
    d_model: int = 96
    ff_dim: int = 192
    dropout: float = 0.0
    max_frames: int = MAX_FRAMES
    text_vocab: int = 64
    max_text_tokens: int = 16
    text_pooled: bool = False
    speech_dim: int = 16
    music_dim: int = 16
    schedule_steps: int = 50
    schedule_kind: str = "cosine"

    @property
    def max_prefix_tokens(self) -> int:
        return self.max_text_tokens + 4 * self.max_frames

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(payload: dict) -> "ModelConfig":
        return ModelConfig(**payload)

    @staticmethod
    def desk() -> "ModelConfig":
        return ModelConfig()

    @staticmethod
    def paper() -> "ModelConfig":
        return ModelConfig(layers=8, heads=8, d_model=1536, ff_dim=3072,
                           dropout=0.1, schedule_steps=1000)


def save_config(config: ModelConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ModelConfig.from_dict(json.load(fh))


class SelfAttention(nn.Module):
    """Multi-head self-attention with exact key masking: ignored keys receive
    -inf scores, so their values contribute exactly zero after softmax."""

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        if d_model % heads != 0:
            raise ValueError("d_model must be divisible by heads")
        self.heads = heads
        self.head_dim = d_model // heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, ignore: torch.Tensor | None) -> torch.Tensor:
        b, length, d = x.shape
        qkv = self.qkv(x).reshape(b, length, 3, self.heads, self.head_dim)
        q, k, v = qkv.unbind(dim=2)
        q = q.transpose(1, 2)
        k = k.transpose(1, 2)
        v = v.transpose(1, 2)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        if ignore is not None:
            scores = scores.masked_fill(ignore[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, length, d)
        return self.out(out)


class EncoderLayer(nn.Module):
    def __init__(self, d_model: int, heads: int, ff_dim: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_dim),
            nn.GELU(),
            nn.Linear(ff_dim, d_model),
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, ignore: torch.Tensor | None) -> torch.Tensor:
        x = x + self.drop(self.attn(self.norm1(x), ignore))
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


class BodyPartCoder(nn.Module):
    """Per-part linear maps between feature columns and d_model slices."""

    def __init__(self, layout: FeatureLayout, d_model: int):
        super().__init__()
        parts = layout.part_columns()
        if d_model % len(parts) != 0:
            raise ValueError("d_model must be divisible by the body-part count")
        self.slice_dim = d_model // len(parts)
        self.columns = [torch.as_tensor(c, dtype=torch.long) for c in parts]
        covered = torch.cat(self.columns).sort().values
        if not torch.equal(covered, torch.arange(layout.dim)):
            raise ValueError("body parts must cover every feature column exactly once")
        self.encode_maps = nn.ModuleList(
            [nn.Linear(len(c), self.slice_dim) for c in parts])
        self.decode_maps = nn.ModuleList(
            [nn.Linear(self.slice_dim, len(c)) for c in parts])
        self.dim = layout.dim

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        pieces = [m(x[..., cols.to(x.device)])
                  for m, cols in zip(self.encode_maps, self.columns)]
        return torch.cat(pieces, dim=-1)

    def decode(self, h: torch.Tensor) -> torch.Tensor:
        out = h.new_zeros(h.shape[:-1] + (self.dim,))
        for i, (m, cols) in enumerate(zip(self.decode_maps, self.columns)):
            s = slice(i * self.slice_dim, (i + 1) * self.slice_dim)
            out[..., cols.to(h.device)] = m(h[..., s])
        return out


class Denoiser(nn.Module):
    """x0-predicting conditional denoiser over motion feature frames."""

    CHANNEL_INDEX = {c: i for i, c in enumerate(CHANNELS)}

    def __init__(self, config: ModelConfig, skeleton: SkeletonSpec,
                 text_featurizer: HashedTextFeaturizer | None = None):
        super().__init__()
        self.config = config
        self.skeleton = skeleton
        self.layout = FeatureLayout(skeleton)
        self.text_featurizer = text_featurizer or HashedTextFeaturizer(
            config.text_vocab, config.max_text_tokens, config.text_pooled)

        d = config.d_model
        self.motion_coder = BodyPartCoder(self.layout, d)
        self.global_coder = BodyPartCoder(self.layout, d)
        self.reference_coder = BodyPartCoder(self.layout, d)
        self.text_proj = nn.Linear(self.text_featurizer.dim, d)
        self.speech_proj = nn.Linear(config.speech_dim, d)
        self.music_proj = nn.Linear(config.music_dim, d)

        self.null_tokens = nn.Parameter(torch.randn(len(CHANNELS), d) * 0.02)
        self.type_embed = nn.Parameter(torch.randn(len(CHANNELS), d) * 0.02)
        self.time_embed = nn.Embedding(config.schedule_steps + 1, d)
        max_seq = config.max_prefix_tokens + config.max_frames
        self.pos_embed = nn.Parameter(torch.randn(max_seq, d) * 0.02)

        self.blocks = nn.ModuleList([
            EncoderLayer(d, config.heads, config.ff_dim, config.dropout)
            for _ in range(config.layers)
        ])
        self.final_norm = nn.LayerNorm(d)

    # ------------------------------------------------------------------
    # prefix assembly

    def channel_region_start(self, channel: str) -> int:
        """Start of the channel's fixed region in the positional table, so a
        token's position never depends on other channels' batch widths."""
        starts = {}
        acc = 0
        for c in CHANNELS:
            starts[c] = acc
            acc += self.config.max_text_tokens if c == "text" else self.config.max_frames
        return starts[channel]

    def _slot(self, channel: str, rows: list[torch.Tensor | None]):
        """Stack per-sample token runs into one fixed-width channel slot,
        with positions indexed from the channel's own region."""
        p = next(self.parameters())
        d = self.config.d_model
        width = max([r.shape[0] for r in rows if r is not None], default=0)
        width = max(width, 1)
        region = self.channel_region_start(channel)
        limit = self.config.max_text_tokens if channel == "text" else self.config.max_frames
        if width > limit:
            raise ValueError(f"{channel} tokens exceed the configured budget ({limit})")
        idx = self.CHANNEL_INDEX[channel]
        null = self.null_tokens[idx]
        tokens = null.expand(len(rows), width, d).clone()
        mask = torch.zeros(len(rows), width, dtype=torch.bool, device=p.device)
        pos = self.pos_embed[region:region + width]
        for i, r in enumerate(rows):
            if r is None:
                continue
            tokens[i, : r.shape[0]] = r + self.type_embed[idx] + pos[: r.shape[0]]
            mask[i, : r.shape[0]] = True
        return tokens, mask

    def build_prefix(self, bundles: list[ConditionBundle],
                     masksets: list[MaskSet] | None = None):
        """Project and concatenate condition tokens in the fixed channel
        order. Returns (prefix (B, L, d_model), component_mask (B, L)) with
        component_mask False on every null/padding token."""
        p = next(self.parameters())
        dtype, device = p.dtype, p.device
        if masksets is None:
            masksets = [MaskSet() for _ in bundles]

        def tensor(a) -> torch.Tensor:
            return torch.as_tensor(np.ascontiguousarray(a), dtype=dtype, device=device)

        text_rows, global_rows, speech_rows, music_rows, ref_rows = [], [], [], [], []
        for bundle, masks in zip(bundles, masksets):
            bundle.validate(self.skeleton, self.config.speech_dim, self.config.music_dim)
            text_rows.append(
                self.text_proj(tensor(self.text_featurizer.encode(bundle.text)))
                if bundle.text is not None else None)
            if bundle.global_motion is not None:
                data = bundle.global_motion.data
                gate = masks.condition_columns(self.layout, data.shape[0])
                global_rows.append(self.global_coder.encode(tensor(data * gate)))
            else:
                global_rows.append(None)
            speech_rows.append(self.speech_proj(tensor(bundle.speech))
                               if bundle.speech is not None else None)
            music_rows.append(self.music_proj(tensor(bundle.music))
                              if bundle.music is not None else None)
            ref_rows.append(self.reference_coder.encode(tensor(bundle.reference_motion.data))
                            if bundle.reference_motion is not None else None)

        slots = [self._slot("text", text_rows),
                 self._slot("global", global_rows),
                 self._slot("speech", speech_rows),
                 self._slot("music", music_rows),
                 self._slot("reference", ref_rows)]
        prefix = torch.cat([s[0] for s in slots], dim=1)
        mask = torch.cat([s[1] for s in slots], dim=1)
        if prefix.shape[1] > self.config.max_prefix_tokens:
            raise ValueError("prefix exceeds the configured token budget")
        return prefix, mask

    # ------------------------------------------------------------------
    # denoising forward pass

    def denoise(self, x_t: torch.Tensor, t: torch.Tensor,
                prefix: torch.Tensor, component_mask: torch.Tensor,
                frame_valid: torch.Tensor | None = None) -> torch.Tensor:
        """Predict x0 from the noisy motion x_t at step t with the prefix.

        frame_valid (B, F) excludes padded frames of ragged batches from
        attention; their rows still produce (ignored) outputs.
        """
        if not torch.isfinite(x_t).all():
            raise ValueError("non-finite values in the noisy motion input")
        if x_t.dim() != 3 or x_t.shape[-1] != self.layout.dim:
            raise ValueError(f"x_t must have shape (B, F, {self.layout.dim})")
        b, frames, _ = x_t.shape
        if frames > self.config.max_frames:
            raise ValueError(f"clip length {frames} exceeds {self.config.max_frames}")
        t = torch.as_tensor(t, device=x_t.device, dtype=torch.long).reshape(-1)
        if t.numel() == 1:
            t = t.expand(b)

        length = prefix.shape[1]
        motion = self.motion_coder.encode(x_t)
        motion = motion + self.time_embed(t)[:, None, :]
        base = self.config.max_prefix_tokens
        motion = motion + self.pos_embed[base:base + frames][None]
        tokens = torch.cat([prefix, motion], dim=1)

        if frame_valid is None:
            motion_ignore = torch.zeros(b, frames, dtype=torch.bool, device=x_t.device)
        else:
            motion_ignore = ~frame_valid.to(device=x_t.device, dtype=torch.bool)
        ignore = torch.cat([~component_mask, motion_ignore], dim=1)
        h = tokens
        for block in self.blocks:
            h = block(h, ignore)
        h = self.final_norm(h[:, length:])
        return self.motion_coder.decode(h)

    def forward(self, x_t, t, bundles, masksets=None, frame_valid=None):
        prefix, mask = self.build_prefix(bundles, masksets)
        return self.denoise(x_t, t, prefix, mask, frame_valid)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_denoiser(config: ModelConfig, skeleton: SkeletonSpec, seed: int = 0,
                   text_featurizer: HashedTextFeaturizer | None = None) -> Denoiser:
    """Construct a denoiser with seeded parameter initialization."""
    torch.manual_seed(seed)
    return Denoiser(config, skeleton, text_featurizer)
