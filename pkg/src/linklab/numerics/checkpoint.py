"""Versioned binary container for named tensors.

Layout (all integers little-endian):
  magic "AILAB" (5 bytes) | format version u32 | tensor count u32
  per tensor, in sorted name order:
    name length u32 | name UTF-8 | rank u32 | dims u64 each | float32 data

Values are stored as float32 regardless of in-memory dtype; loading returns
float32 arrays, so a save/load round trip of float32 data is bit-exact.
Writes go through a temp file and os.replace so readers never see a torn file.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import ContractError

MAGIC = b"AILAB"
FORMAT_VERSION = 1


def _to_array(x) -> np.ndarray:
    if not isinstance(x, np.ndarray):
        data = getattr(x, "data", None)  # accept Tensor
        x = data if isinstance(data, np.ndarray) else np.asarray(x)
    return x


def save_tensors(path: str, tensors: dict) -> None:
    blobs = []
    for name in sorted(tensors):
        src = np.asarray(_to_array(tensors[name]), dtype=np.float32)
        # ascontiguousarray promotes 0-d to 1-d; keep the true rank
        arr = np.ascontiguousarray(src).reshape(src.shape)
        nb = name.encode("utf-8")
        head = struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim)
        head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        blobs.append(head + arr.astype("<f4").tobytes())
    payload = MAGIC + struct.pack("<II", FORMAT_VERSION, len(blobs)) + b"".join(blobs)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def load_tensors(path: str) -> dict:
    if not os.path.exists(path):
        raise ContractError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:5] != MAGIC:
        raise ContractError(f"{path}: bad magic, not a checkpoint container")
    version, count = struct.unpack_from("<II", raw, 5)
    if version != FORMAT_VERSION:
        raise ContractError(f"{path}: unsupported container version {version}")
    off = 13
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", raw, off) if rank else ()
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        out[name] = arr.copy()
    if off != len(raw):
        raise ContractError(f"{path}: {len(raw) - off} trailing bytes after last tensor")
    return out
