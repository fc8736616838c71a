"""Binary checkpoint: magic, version byte, JSON header, raw little-endian float64s.

Layout::

    b"TGIB" | version (1 byte) | header length (uint32 LE) | header (UTF-8 JSON)
    | tensor payloads in header order, each as contiguous '<f8'

The header holds ``{"hyperparameters": {...}, "tensors": [{"name", "shape"}, ...]}``
and is serialized with sorted keys so identical models give identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TGIB"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors, hyperparameters=None):
    """``tensors`` maps names to arrays or Tensors; order is preserved."""
    arrays = {k: np.ascontiguousarray(getattr(v, "data", v), dtype="<f8") for k, v in tensors.items()}
    header = {
        "hyperparameters": hyperparameters or {},
        "tensors": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", VERSION, len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(a.tobytes())


def load_checkpoint(path):
    """Return ``(arrays, hyperparameters)`` with arrays in file order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<BI", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + struct.calcsize("<BI")
    header = json.loads(raw[start:start + hlen].decode("utf-8"))
    offset = start + hlen
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated payload for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset) \
            .astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays, header["hyperparameters"]
