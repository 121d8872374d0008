"""Canonical skeleton description and its text serialization.

A SkeletonSpec pins down every dimensionality in the system: joint count N,
rotated-joint count N', the per-frame feature width D, and the body-part
partition the model embeds over. The up axis is an explicit field because
source mocap conventions disagree about which axis is vertical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FACE_DIM = 100
CONTACT_DIM = 4


@dataclass(frozen=True)
class SkeletonSpec:
    joint_names: tuple[str, ...]
    parent_index: tuple[int, ...]
    rest_offsets: np.ndarray                 # (N, 3) meters, parent-local
    rotated_joints: tuple[int, ...]          # joints carrying rotation params
    heel_joints: tuple[int, ...] = ()
    toe_joints: tuple[int, ...] = ()
    hand_joints: tuple[int, ...] = ()
    key_joints: tuple[int, ...] = ()
    body_parts: tuple[tuple[int, ...], ...] = ()
    up_axis: str = "y"
    name: str = "skeleton"

    def __post_init__(self):
        object.__setattr__(self, "rest_offsets",
                           np.asarray(self.rest_offsets, dtype=np.float64).reshape(-1, 3))
        n = len(self.joint_names)
        if n < 1:
            raise ValueError("skeleton needs at least one joint")
        if len(self.parent_index) != n or self.rest_offsets.shape[0] != n:
            raise ValueError("joint_names, parent_index and rest_offsets must agree in length")
        if self.parent_index[0] != -1:
            raise ValueError("joint 0 must be the root (parent -1)")
        for j, p in enumerate(self.parent_index):
            if j == 0:
                continue
            if not (0 <= p < j):
                raise ValueError(f"joint {j} parent {p} must precede it (topological order)")
        for label, idx in (("rotated", self.rotated_joints), ("heel", self.heel_joints),
                           ("toe", self.toe_joints), ("hand", self.hand_joints),
                           ("key", self.key_joints)):
            for j in idx:
                if not (0 <= j < n):
                    raise ValueError(f"{label} joint index {j} out of range")
        if len(set(self.rotated_joints)) != len(self.rotated_joints):
            raise ValueError("rotated_joints contains duplicates")
        if 0 not in self.rotated_joints:
            raise ValueError("root joint must carry a rotation parameter")
        if self.body_parts:
            flat = [j for part in self.body_parts for j in part]
            if sorted(flat) != list(range(n)):
                raise ValueError("body_parts must partition the joint set exactly")
        if self.up_axis not in ("y", "z"):
            raise ValueError(f"up_axis must be 'y' or 'z', got {self.up_axis!r}")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def rotated_count(self) -> int:
        return len(self.rotated_joints)

    @property
    def part_count(self) -> int:
        return len(self.body_parts)

    @property
    def feature_dim(self) -> int:
        return feature_dim(self.joint_count, self.rotated_count)

    @property
    def up_index(self) -> int:
        return 1 if self.up_axis == "y" else 2

    @property
    def plane_indices(self) -> tuple[int, int]:
        """Ground-plane axis indices as (lateral, forward)."""
        return (0, 2) if self.up_axis == "y" else (0, 1)

    @property
    def forward_vector(self) -> np.ndarray:
        v = np.zeros(3)
        v[self.plane_indices[1]] = 1.0
        return v

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(self.joint_count)]
        for j, p in enumerate(self.parent_index):
            if p >= 0:
                kids[p].append(j)
        return kids

    def rotated_slot(self, joint: int) -> int | None:
        """Index of ``joint`` within rotated_joints, or None."""
        try:
            return self.rotated_joints.index(joint)
        except ValueError:
            return None

    def contact_joints(self) -> tuple[int, ...]:
        """Joints feeding the 4 contact columns: heels then toes, padded order."""
        return tuple(self.heel_joints[:2]) + tuple(self.toe_joints[:2])


def feature_dim(joint_count: int, rotated_count: int) -> int:
    """Per-frame feature width: root 4 + positions + 6D rotations + velocities
    + contacts + face."""
    return 4 + 3 * (joint_count - 1) + 6 * rotated_count + 3 * joint_count + CONTACT_DIM + FACE_DIM


def save_skeleton(spec: SkeletonSpec, path) -> None:
    payload = {
        "name": spec.name,
        "joint_count": spec.joint_count,
        "joint_names": list(spec.joint_names),
        "parent_index": list(spec.parent_index),
        "rest_offsets": [[float(v) for v in row] for row in spec.rest_offsets],
        "rotated_joints": list(spec.rotated_joints),
        "heel_joints": list(spec.heel_joints),
        "toe_joints": list(spec.toe_joints),
        "hand_joints": list(spec.hand_joints),
        "key_joints": list(spec.key_joints),
        "body_parts": [list(p) for p in spec.body_parts],
        "up_axis": spec.up_axis,
        "feature_dim": spec.feature_dim,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_skeleton(path) -> SkeletonSpec:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    spec = SkeletonSpec(
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
    declared = payload.get("feature_dim")
    if declared is not None and declared != spec.feature_dim:
        raise ValueError(f"skeleton file declares feature_dim={declared}, computed {spec.feature_dim}")
    return spec
