"""Versioned checkpoint format.

A checkpoint is a single binary file:

    magic   8 bytes  b"CXRSSLCK"
    u32     header length (little-endian)
    header  UTF-8 JSON with sorted keys:
              {"format_version": 1,
               "meta": {...config echo, step, epoch...},
               "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    payload raw little-endian tensor bytes at the listed offsets

Tensor names are the stable module state-dict strings (for example
``student.encoder.stages.0.reduce.prm.convs.0.weight``) plus optimizer
slots under ``opt/``.  Writing is fully deterministic: identical tensors
and metadata produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import ArtifactError

MAGIC = b"CXRSSLCK"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray | torch.Tensor],
                    meta: dict) -> Path:
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        value = tensors[name]
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().numpy()
        arr = np.ascontiguousarray(value)
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise ArtifactError(f"{path} is not a checkpoint (bad magic)")
    header_len = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])[0]
    header_start = len(MAGIC) + 4
    try:
        header = json.loads(raw[header_start:header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: corrupt checkpoint header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported checkpoint format version {version!r} "
                            f"(this build reads v{FORMAT_VERSION})")
    payload = raw[header_start + header_len:]
    tensors = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise ArtifactError(f"{path}: truncated checkpoint payload at {entry['name']!r}")
        arr = np.frombuffer(payload[start:start + nbytes], dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return tensors, header["meta"]


def method_tensors(method: torch.nn.Module,
                   optimizer: torch.optim.Optimizer | None = None) -> dict[str, torch.Tensor]:
    """Flatten a method (and optionally its optimizer) into named tensors."""
    tensors: dict[str, torch.Tensor] = dict(method.state_dict())
    if optimizer is not None:
        params = [p for group in optimizer.param_groups for p in group["params"]]
        index_of = {id(p): i for i, p in enumerate(params)}
        for p, slots in optimizer.state.items():
            i = index_of[id(p)]
            for key, value in slots.items():
                if isinstance(value, torch.Tensor):
                    tensors[f"opt/{i}/{key}"] = value
                else:
                    tensors[f"opt/{i}/{key}"] = torch.tensor(float(value))
    return tensors


def restore_method(method: torch.nn.Module, tensors: dict[str, np.ndarray],
                   optimizer: torch.optim.Optimizer | None = None):
    """Inverse of :func:`method_tensors`; loads parameters, buffers, and
    optimizer slots in place."""
    model_state = {k: torch.from_numpy(v) for k, v in tensors.items() if not k.startswith("opt/")}
    method.load_state_dict(model_state, strict=True)
    if optimizer is not None:
        params = [p for group in optimizer.param_groups for p in group["params"]]
        slots: dict[int, dict] = {}
        for name, value in tensors.items():
            if not name.startswith("opt/"):
                continue
            _, idx, key = name.split("/", 2)
            slots.setdefault(int(idx), {})[key] = torch.from_numpy(value)
        for i, state in slots.items():
            fixed = {}
            for key, value in state.items():
                if key == "step" and value.ndim == 0:
                    fixed[key] = value.to(torch.float32)
                else:
                    fixed[key] = value
            optimizer.state[params[i]] = fixed
