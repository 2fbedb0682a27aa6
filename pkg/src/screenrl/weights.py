"""Versioned flat binary container for model weights.

Layout (little endian)::

    magic  b"SRLW"
    u32    format version
    u32    len(kind) followed by kind as UTF-8
    u32    number of arrays
    per array: u32 ndim, ndim x u64 dims, row-major float64 data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SRLW"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


def dump_arrays(kind: str, arrays: list[np.ndarray]) -> bytes:
    k = kind.encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(k)), k, struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.asarray(a, dtype="<f8")
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes(order="C"))
    return b"".join(parts)


def load_arrays(raw: bytes) -> tuple[str, list[np.ndarray]]:
    try:
        return _parse(raw)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, WeightsFormatError):
            raise
        raise WeightsFormatError(f"truncated or corrupt weights: {exc}") from exc


def _parse(raw: bytes) -> tuple[str, list[np.ndarray]]:
    if raw[:4] != MAGIC:
        raise WeightsFormatError("bad magic bytes")
    version, klen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    pos = 12
    kind = raw[pos:pos + klen].decode()
    pos += klen
    (n,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    arrays = []
    for _ in range(n):
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
        arrays.append(a)
    if pos != len(raw):
        raise WeightsFormatError("trailing bytes after last array")
    return kind, arrays


def save(path: str | Path, kind: str, arrays: list[np.ndarray]) -> None:
    Path(path).write_bytes(dump_arrays(kind, arrays))


def load(path: str | Path) -> tuple[str, list[np.ndarray]]:
    return load_arrays(Path(path).read_bytes())
