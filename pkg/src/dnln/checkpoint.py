"""Checkpoint serialization.

A checkpoint is a directory of two files:

  manifest.txt   key=value model configuration, then one line per tensor:
                 <name> <rank> <extent...> <byte offset into tensors.blob>
  tensors.blob   per tensor: u32 rank, u32 per extent, then the row-major
                 float64 payload, all little-endian.

Writing is deterministic in tensor order, so load -> save round-trips to
identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import Model, ModelConfig, named_parameters
from .tensor import Tensor

MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "tensors.blob"
FORMAT_TAG = "dnln-checkpoint-v1"


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def config_to_text(config: ModelConfig) -> str:
    return "".join(f"{k}={_fmt_value(v)}\n" for k, v in config.to_dict().items())


def config_from_lines(lines) -> ModelConfig:
    d = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        d[key.strip()] = value.strip()
    return ModelConfig.from_dict(d)


def read_config_file(path) -> ModelConfig:
    with open(path) as fh:
        return config_from_lines(fh)


def write_config_file(path, config: ModelConfig) -> None:
    Path(path).write_text(config_to_text(config))


def save_checkpoint(ckpt_dir, config: ModelConfig, tensors: dict) -> None:
    """Write manifest + blob; `tensors` maps name -> Tensor or ndarray."""
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    records = []
    blob = bytearray()
    for name, t in tensors.items():
        arr = np.ascontiguousarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64)
        offset = len(blob)
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f8").tobytes()
        parts = [name, str(arr.ndim), *map(str, arr.shape), str(offset)]
        records.append(" ".join(parts))
    manifest = [f"format={FORMAT_TAG}", "[config]"]
    manifest.append(config_to_text(config).rstrip("\n"))
    manifest.append("[tensors]")
    manifest.extend(records)
    (ckpt_dir / MANIFEST_NAME).write_text("\n".join(manifest) + "\n")
    (ckpt_dir / BLOB_NAME).write_bytes(bytes(blob))


def load_checkpoint(ckpt_dir):
    """Read a checkpoint directory -> (ModelConfig, ordered name->ndarray map)."""
    ckpt_dir = Path(ckpt_dir)
    manifest_path = ckpt_dir / MANIFEST_NAME
    blob_path = ckpt_dir / BLOB_NAME
    if not manifest_path.is_file() or not blob_path.is_file():
        raise FileNotFoundError(f"{ckpt_dir} is not a checkpoint (missing manifest/blob)")
    lines = manifest_path.read_text().splitlines()
    if not lines or lines[0] != f"format={FORMAT_TAG}":
        raise ValueError(f"{manifest_path}: unrecognized checkpoint format")
    try:
        cfg_start = lines.index("[config]") + 1
        tns_start = lines.index("[tensors]") + 1
    except ValueError as exc:
        raise ValueError(f"{manifest_path}: malformed manifest sections") from exc
    config = config_from_lines(lines[cfg_start : tns_start - 1])

    blob = blob_path.read_bytes()
    tensors = {}
    for line in lines[tns_start:]:
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        name, rank = parts[0], int(parts[1])
        extents = tuple(int(v) for v in parts[2 : 2 + rank])
        offset = int(parts[2 + rank])
        if name in tensors:
            raise ValueError(f"{manifest_path}: duplicate tensor {name}")
        (hdr_rank,) = struct.unpack_from("<I", blob, offset)
        hdr_extents = struct.unpack_from(f"<{hdr_rank}I", blob, offset + 4)
        if hdr_rank != rank or tuple(hdr_extents) != extents:
            raise ValueError(f"{name}: blob header disagrees with manifest record")
        start = offset + 4 + 4 * rank
        count = int(np.prod(extents)) if extents else 1
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        tensors[name] = data.reshape(extents).astype(np.float64)
    return config, tensors


def load_into_model(model: Model, tensors: dict) -> None:
    """Copy checkpoint arrays onto model parameters; name sets must match."""
    params = named_parameters(model)
    missing = sorted(set(params) - set(tensors))
    surplus = sorted(set(tensors) - set(params))
    if missing or surplus:
        raise ValueError(
            f"checkpoint/model mismatch: missing {missing[:5]}, surplus {surplus[:5]}"
        )
    for name, param in params.items():
        arr = tensors[name]
        if arr.shape != param.data.shape:
            raise ValueError(
                f"{name}: checkpoint shape {arr.shape} vs model shape {param.data.shape}"
            )
        param.data = np.ascontiguousarray(arr)


def load_model(ckpt_dir, seed: int = 0) -> Model:
    from .model import build_model

    config, tensors = load_checkpoint(ckpt_dir)
    model = build_model(config, seed=seed)
    load_into_model(model, tensors)
    return model
