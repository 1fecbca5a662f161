"""Flat binary parameter checkpoints.

Layout (all integers little-endian)::

    b"DCKPT1"                    magic
    uint32                       tensor count
    per tensor:
        uint32 name length, name bytes (UTF-8)
        uint32 rank
        uint64 * rank            extents
        float64 * prod(extents)  data, little-endian, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from deepdist.errors import DataError

MAGIC = b"DCKPT1"


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:6] != MAGIC:
        raise DataError("not a DCKPT1 checkpoint (bad magic)")
    pos = 6
    try:
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape)
            pos += 8 * n
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated or corrupt checkpoint: {exc}") from None
    if pos != len(blob):
        raise DataError("trailing bytes after checkpoint payload")
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
