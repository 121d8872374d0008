"""Versioned binary checkpoint container.

Layout (little-endian): magic "MGCK", u32 version, u32-length-prefixed JSON
config block, u32 tensor count, then per tensor: u16 name length + UTF-8
name, u8 ndim, u32 dims, float32 data. A sha256 digest of everything before
it closes the file; loads verify it.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"MGCK"
VERSION = 1


def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> str:
    """Write the container; returns the hex checksum."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(config_bytes)))
    parts.append(config_bytes)
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name], dtype="<f4")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{max(data.ndim, 1)}I",
                                 *(data.shape or (1,))))
        parts.append(data.tobytes(order="C"))
    payload = b"".join(parts)
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(payload + digest)
    return digest.hex()


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], str]:
    """Read and verify the container; returns (config, tensors, checksum)."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError("not a checkpoint container (bad magic)")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ValueError("checkpoint integrity check failed")
    (version,) = struct.unpack_from("<I", payload, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 8
    (config_len,) = struct.unpack_from("<I", payload, off)
    off += 4
    config = json.loads(payload[off:off + config_len].decode("utf-8"))
    off += config_len
    (count,) = struct.unpack_from("<I", payload, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", payload, off)
        off += 2
        name = payload[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", payload, off)
        off += 1
        dims = struct.unpack_from(f"<{max(ndim, 1)}I", payload, off)
        off += 4 * max(ndim, 1)
        shape = tuple(dims[:ndim]) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(payload, dtype="<f4", count=size, offset=off)
        off += size * 4
        tensors[name] = data.reshape(shape).copy() if ndim else data.copy().reshape(())
    return config, tensors, hashlib.sha256(payload + digest).hexdigest()


def checkpoint_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def model_tensors(model: torch.nn.Module, prefix: str = "model.") -> dict[str, np.ndarray]:
    return {prefix + name: param.detach().cpu().numpy().astype(np.float32)
            for name, param in model.state_dict().items()}


def load_model_tensors(model: torch.nn.Module, tensors: dict[str, np.ndarray],
                       prefix: str = "model.") -> None:
    state = {}
    for name, param in model.state_dict().items():
        key = prefix + name
        if key not in tensors:
            raise ValueError(f"checkpoint is missing tensor {key!r}")
        value = torch.as_tensor(tensors[key], dtype=torch.float32)
        if tuple(value.shape) != tuple(param.shape):
            raise ValueError(f"tensor {key!r} shape {tuple(value.shape)} != {tuple(param.shape)}")
        state[name] = value.to(param.dtype)
    model.load_state_dict(state)


def optimizer_tensors(optimizer: torch.optim.Optimizer,
                      named_params: list[tuple[str, torch.nn.Parameter]]
                      ) -> tuple[dict[str, np.ndarray], dict]:
    """Serialize AdamW moments keyed by parameter name, plus scalar state."""
    tensors: dict[str, np.ndarray] = {}
    scalars: dict[str, float] = {}
    lookup = {id(p): n for n, p in named_params}
    for group in optimizer.param_groups:
        for p in group["params"]:
            state = optimizer.state.get(p)
            if not state:
                continue
            name = lookup[id(p)]
            tensors[f"opt.exp_avg.{name}"] = state["exp_avg"].cpu().numpy()
            tensors[f"opt.exp_avg_sq.{name}"] = state["exp_avg_sq"].cpu().numpy()
            scalars[name] = float(state["step"])
    return tensors, scalars


def load_optimizer_tensors(optimizer: torch.optim.Optimizer,
                           named_params: list[tuple[str, torch.nn.Parameter]],
                           tensors: dict[str, np.ndarray],
                           scalars: dict) -> None:
    for name, p in named_params:
        key = f"opt.exp_avg.{name}"
        if key not in tensors:
            continue
        state = optimizer.state[p]
        state["exp_avg"] = torch.as_tensor(tensors[key], dtype=p.dtype)
        state["exp_avg_sq"] = torch.as_tensor(tensors[f"opt.exp_avg_sq.{name}"], dtype=p.dtype)
        state["step"] = torch.tensor(float(scalars[name]))


def encode_rng_state(torch_gen: torch.Generator, np_rng: np.random.Generator) -> dict:
    return {
        "torch": base64.b64encode(torch_gen.get_state().numpy().tobytes()).decode("ascii"),
        "numpy": json.loads(json.dumps(np_rng.bit_generator.state)),
    }


def decode_rng_state(state: dict, torch_gen: torch.Generator,
                     np_rng: np.random.Generator) -> None:
    raw = base64.b64decode(state["torch"])
    torch_gen.set_state(torch.tensor(np.frombuffer(raw, dtype=np.uint8)))
    np_rng.bit_generator.state = state["numpy"]
