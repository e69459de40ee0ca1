"""Flat binary parameter container.

Layout (all integers little-endian)::

    magic       8 bytes   b"GMXCKPT\\0"
    version     u32
    header_len  u32, then that many bytes of UTF-8 JSON (sorted keys)
    count       u32
    count x entry:
        name_len u16, name (UTF-8)
        ndim     u8, dims u64 * ndim
        payload  float64 little-endian, row-major

Arrays round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"GMXCKPT\0"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict, header: dict | None = None) -> None:
    header = dict(header or {})
    header.setdefault("format_version", FORMAT_VERSION)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(head)), head,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(header, arrays)``; arrays keep the on-disk (sorted) order."""
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise DataError(f"{path}: not a gaitmixer checkpoint")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape)
            arrays[name] = arr.astype(np.float64)
            pos += 8 * n
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated checkpoint") from exc
    if pos != len(buf):
        raise DataError(f"{path}: {len(buf) - pos} trailing bytes after last entry")
    return header, arrays
