"""Forward noising, masked training loss, and the DDPM sampler."""

from __future__ import annotations

import numpy as np
import torch

from .conditions import ConditionBundle, MaskSet
from .model import Denoiser
from .schedule import NoiseSchedule


def q_sample(x0: torch.Tensor, t, noise: torch.Tensor,
             schedule: NoiseSchedule) -> torch.Tensor:
    """Noisy sample at step t: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise."""
    t_arr = np.asarray(t if not isinstance(t, torch.Tensor) else t.cpu().numpy())
    ab = schedule.alpha_bar(t_arr)
    ab_t = torch.as_tensor(ab, dtype=x0.dtype, device=x0.device)
    while ab_t.dim() < x0.dim():
        ab_t = ab_t.unsqueeze(-1)
    return torch.sqrt(ab_t) * x0 + torch.sqrt(1.0 - ab_t) * noise


def training_loss(model: Denoiser, x0: torch.Tensor,
                  bundles: list[ConditionBundle], masksets: list[MaskSet],
                  schedule: NoiseSchedule,
                  generator: torch.Generator,
                  frame_valid: torch.Tensor | None = None,
                  face_present: list[bool] | None = None) -> torch.Tensor:
    """Mean masked squared error between x0 and the model's x0 prediction.

    Feature columns excluded by a sample's reconstruction mask (and the face
    block when the sample has no face data) are zeroed in the model input and
    excluded from the loss, so unannotated ground truth can never leak in.
    """
    b, frames, dim = x0.shape
    layout = model.layout
    face_present = face_present or [True] * b

    cols = np.stack([
        masks.recon_columns(layout, frames, face_present=face_present[i])
        for i, masks in enumerate(masksets)
    ])
    mask = torch.as_tensor(cols, dtype=torch.bool, device=x0.device)
    if frame_valid is not None:
        mask = mask & frame_valid[:, :, None].to(torch.bool)
    supervised = mask.sum()
    if supervised.item() == 0:
        raise ValueError("degenerate batch: no supervised feature entries")

    x0_masked = x0 * mask.to(x0.dtype)
    t = torch.randint(1, schedule.steps + 1, (b,), generator=generator,
                      device=x0.device)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype,
                        device=x0.device)
    x_t = q_sample(x0_masked, t, noise, schedule)
    x0_hat = model(x_t, t, bundles, masksets, frame_valid=frame_valid)
    sq = (x0_masked - x0_hat) ** 2
    return (sq * mask.to(x0.dtype)).sum() / supervised.to(x0.dtype)


@torch.no_grad()
def ddpm_sample(model: Denoiser, bundle: ConditionBundle, masks: MaskSet,
                schedule: NoiseSchedule, frames: int, seed: int,
                guidance_scale: float = 1.0,
                observed_values: torch.Tensor | None = None,
                observed_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Ancestral DDPM sampling of one clip (frames, D), x0-parameterized.

    Observed cells (feature-column mask) are re-imposed from the condition
    after every step, so they match the condition bit-exactly on return.
    Deterministic given the seed.
    """
    if frames > model.config.max_frames:
        raise ValueError(f"requested {frames} frames; limit {model.config.max_frames}")
    p = next(model.parameters())
    device, dtype = p.device, p.dtype
    generator = torch.Generator(device=device)
    generator.manual_seed(seed)

    prefix, comp = model.build_prefix([bundle], [masks])
    uncond = None
    if guidance_scale != 1.0:
        uncond = model.build_prefix([ConditionBundle()], [MaskSet()])

    if observed_mask is not None:
        observed_mask = observed_mask.to(device=device, dtype=torch.bool)
        observed_values = observed_values.to(device=device, dtype=dtype)

    def project(x: torch.Tensor) -> torch.Tensor:
        if observed_mask is None:
            return x
        return torch.where(observed_mask[None], observed_values[None], x)

    x = torch.randn(1, frames, model.layout.dim, generator=generator,
                    device=device, dtype=dtype)
    x = project(x)
    for t in range(schedule.steps, 0, -1):
        t_tensor = torch.full((1,), t, dtype=torch.long, device=device)
        x0_hat = model.denoise(x, t_tensor, prefix, comp)
        if uncond is not None:
            x0_null = model.denoise(x, t_tensor, *uncond)
            x0_hat = x0_null + guidance_scale * (x0_hat - x0_null)
        if t > 1:
            coef_x0, coef_xt, variance = schedule.posterior_coefficients(t)
            noise = torch.randn(x.shape, generator=generator, device=device,
                                dtype=dtype)
            x = coef_x0 * x0_hat + coef_xt * x + np.sqrt(variance) * noise
        else:
            x = x0_hat
        x = project(x)
    return x[0]
