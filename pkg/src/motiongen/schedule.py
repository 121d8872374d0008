"""Diffusion noise schedules.

Steps are 1-indexed: t ranges over [1, T]. The linear schedule's beta
endpoints are scaled by 1000/T so that the terminal signal level stays
negligible (alpha_bar_T < 0.05) at any step count; at T = 1000 the endpoints
are the classic [1e-4, 2e-2].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    betas: np.ndarray                  # (T,) float64
    alphas: np.ndarray                 # 1 - beta
    alphas_cumprod: np.ndarray         # running product of alphas

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t) -> np.ndarray:
        """alpha_bar at step t in [1, T]; t may be an array."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.steps):
            raise ValueError(f"step t must lie in [1, {self.steps}]")
        return self.alphas_cumprod[t - 1]

    def alpha_bar_prev(self, t) -> np.ndarray:
        """alpha_bar at step t-1, defined as 1 for t = 1."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.steps):
            raise ValueError(f"step t must lie in [1, {self.steps}]")
        padded = np.concatenate([[1.0], self.alphas_cumprod])
        return padded[t - 1]

    def posterior_coefficients(self, t):
        """(coef_x0, coef_xt, variance) of the reverse-step posterior."""
        ab = self.alpha_bar(t)
        ab_prev = self.alpha_bar_prev(t)
        beta = self.betas[np.asarray(t) - 1]
        alpha = self.alphas[np.asarray(t) - 1]
        coef_x0 = np.sqrt(ab_prev) * beta / (1.0 - ab)
        coef_xt = np.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)
        variance = (1.0 - ab_prev) / (1.0 - ab) * beta
        return coef_x0, coef_xt, variance


def build_schedule(steps: int, kind: str = "cosine") -> NoiseSchedule:
    if steps < 2:
        raise ValueError("schedule needs at least 2 steps")
    if kind == "linear":
        scale = 1000.0 / steps
        start = min(scale * 1e-4, 0.5)
        end = min(scale * 2e-2, 0.999)
        betas = np.linspace(start, end, steps)
    elif kind == "cosine":
        s = 0.008
        grid = np.arange(steps + 1) / steps
        f = np.cos((grid + s) / (1.0 + s) * np.pi / 2.0) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 1e-8, 0.999)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")

    alphas = 1.0 - betas
    alphas_cumprod = np.cumprod(alphas)
    schedule = NoiseSchedule(kind, betas, alphas, alphas_cumprod)
    if not np.all(np.diff(alphas_cumprod) < 0):
        raise AssertionError("alpha_bar must be strictly decreasing")
    return schedule
