"""Self-describing checkpoint container.

Layout: an 8-byte magic, a little-endian uint32 header length, a UTF-8 JSON
header, then the raw little-endian tensor buffers concatenated in header
order. The header carries a mandatory format version, the full model
configuration, optional caller metadata, and per-tensor name/shape/dtype
records. Byte output is deterministic for identical tensors and metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch

from .model import ModelConfig, TokenTransformer

MAGIC = b"ACCENTCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


class CheckpointError(ValueError):
    """Malformed, truncated, or version-incompatible checkpoint file."""


def save_checkpoint(
    path: str | Path,
    model: TokenTransformer,
    meta: Optional[dict[str, Any]] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: list[tuple[str, np.ndarray]] = []
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy()
        if array.dtype.name not in _DTYPES:
            array = array.astype(np.float32)
        tensors.append((name, np.ascontiguousarray(array)))
    records = []
    offset = 0
    for name, array in tensors:
        records.append(
            {
                "name": name,
                "shape": list(array.shape),
                "dtype": array.dtype.name,
                "offset": offset,
                "nbytes": array.nbytes,
            }
        )
        offset += array.nbytes
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "meta": meta or {},
        "tensors": records,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, array in tensors:
            fh.write(array.tobytes())


def load_checkpoint(path: str | Path) -> tuple[TokenTransformer, dict[str, Any]]:
    """Rebuild the model from a checkpoint; returns (model, meta)."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header") from exc
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {header.get('version')!r}"
            )
        config = ModelConfig.from_dict(header["config"])
        payload = fh.read()
    state = {}
    for record in header["tensors"]:
        start, nbytes = record["offset"], record["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated tensor data for {record['name']}")
        array = np.frombuffer(
            payload, dtype=_DTYPES[record["dtype"]], count=nbytes // np.dtype(record["dtype"]).itemsize, offset=start
        ).reshape(record["shape"])
        state[record["name"]] = torch.from_numpy(array.copy())
    model = TokenTransformer(config)
    model.load_state_dict(state)
    model.eval()
    return model, header.get("meta", {})
