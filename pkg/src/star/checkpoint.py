"""Named-tensor checkpoint container.

Layout: magic "STNC", u32 format version, then entries until EOF. Entry:
u64 name length, UTF-8 name, u64 rank, rank x u64 extents, row-major
float64 data. All integers and floats little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"STNC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors in sorted-name order (deterministic bytes)."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", FORMAT_VERSION)
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        nb = name.encode("utf-8")
        buf += struct.pack("<Q", len(nb))
        buf += nb
        buf += struct.pack("<Q", arr.ndim)
        for extent in arr.shape:
            buf += struct.pack("<Q", extent)
        buf += arr.astype("<f8").tobytes()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(buf))
    tmp.replace(path)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(raw):
        try:
            (name_len,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            extents = struct.unpack_from(f"<{rank}Q", raw, pos)
            pos += 8 * rank
            count = int(np.prod(extents)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos)
            pos += 8 * count
        except (struct.error, ValueError) as exc:
            raise CheckpointError(f"{path}: truncated entry at byte {pos}") from exc
        if len(arr) != count:
            raise CheckpointError(f"{path}: truncated data for {name!r}")
        out[name] = arr.reshape(extents).astype(np.float64)
    return out


def pack_meta(meta: dict) -> np.ndarray:
    """Encode a JSON-able dict as a byte-valued tensor (checkpoint metadata)."""
    data = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(data, dtype=np.uint8).astype(np.float64)


def unpack_meta(arr: np.ndarray) -> dict:
    data = np.asarray(arr).astype(np.uint8).tobytes()
    return json.loads(data.decode("utf-8"))
