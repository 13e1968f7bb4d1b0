"""Checkpoint files: magic "NNCK", version, JSON topology header, float32
parameter blobs, little-endian throughout.

Parameters are stored as float32. Loading embeds them back into float64
exactly, so save(load(path)) reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"NNCK"
VERSION = 1


def save_checkpoint(
    path: str | Path,
    topology: dict,
    params: dict[str, Tensor | np.ndarray],
    metadata: dict | None = None,
) -> None:
    names = sorted(params)
    manifest = []
    blobs = []
    for name in names:
        tensor = params[name]
        array = tensor.data if isinstance(tensor, Tensor) else tensor
        blob = np.ascontiguousarray(array, dtype="<f4")
        manifest.append({"name": name, "shape": list(array.shape)})
        blobs.append(blob.tobytes())
    header = {
        "topology": topology,
        "metadata": metadata or {},
        "parameters": manifest,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<H", VERSION))
        handle.write(struct.pack("<I", len(encoded)))
        handle.write(encoded)
        for blob in blobs:
            handle.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray], dict]:
    """Returns (topology, params as float64 arrays, metadata)."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: magic {magic!r}")
        (version,) = struct.unpack("<H", handle.read(2))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<I", handle.read(4))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for entry in header["parameters"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            blob = handle.read(4 * count)
            array = np.frombuffer(blob, dtype="<f4").reshape(shape)
            params[entry["name"]] = array.astype(np.float64)
    return header["topology"], params, header["metadata"]


def assign_parameters(target: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    missing = sorted(set(target) - set(loaded))
    extra = sorted(set(loaded) - set(target))
    if missing or extra:
        raise ValueError(f"parameter mismatch: missing {missing}, unexpected {extra}")
    for name, tensor in target.items():
        if tensor.data.shape != loaded[name].shape:
            raise ValueError(
                f"shape mismatch for {name}: "
                f"{tensor.data.shape} vs {loaded[name].shape}"
            )
        tensor.data = loaded[name].copy()
