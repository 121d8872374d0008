"""Task observation masks for spatial-temporal controllable generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .skeleton import SkeletonSpec

TASK_KINDS = ("predict", "inbetween", "complete", "trajectory", "dense")


@dataclass
class TaskMaskSpec:
    kind: str
    prefix_frames: int = 30
    suffix_frames: int = 10
    cells: tuple[tuple[int, int], ...] = ()        # (frame, joint) for "complete"
    controlled_joints: tuple[int, ...] | None = None  # trajectory; default root

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")


def make_task_mask(spec: TaskMaskSpec, skeleton: SkeletonSpec, frames: int) -> np.ndarray:
    """Frames-by-joints boolean observation mask (True = observed/controlled)."""
    n = skeleton.joint_count
    mask = np.zeros((frames, n), dtype=bool)
    if spec.kind == "dense":
        mask[:] = True
    elif spec.kind == "predict":
        p = spec.prefix_frames
        if p <= 0:
            raise ValueError("predict requires a non-empty observed prefix")
        if p > frames:
            raise ValueError(f"prefix {p} exceeds clip length {frames}")
        mask[:p] = True
    elif spec.kind == "inbetween":
        p, s = spec.prefix_frames, spec.suffix_frames
        if p <= 0 or s <= 0:
            raise ValueError("inbetween requires non-empty prefix and suffix")
        if p + s > frames:
            raise ValueError("prefix + suffix exceed the clip length")
        mask[:p] = True
        mask[frames - s:] = True
    elif spec.kind == "complete":
        if not spec.cells:
            raise ValueError("complete requires at least one observed cell")
        for f, j in spec.cells:
            if not (0 <= f < frames and 0 <= j < n):
                raise ValueError(f"cell ({f}, {j}) out of range")
            mask[f, j] = True
    else:  # trajectory
        joints = spec.controlled_joints if spec.controlled_joints is not None else (0,)
        if not joints:
            raise ValueError("trajectory requires at least one controlled joint")
        for j in joints:
            if not (0 <= j < n):
                raise ValueError(f"controlled joint {j} out of range")
            mask[:, j] = True
    return mask
