"""EMB1 embedding file I/O.

Layout (little-endian, payload at byte offset 32):

    magic "EMB1" | version u32 | row_count u64 | dim u32 | reserved u32 |
    8 zero pad bytes | row-major f32 payload |
    id table: row_count x (u32 length + UTF-8 row id)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIQII8x")


def write_emb1(path: str | Path, vectors: np.ndarray, row_ids: list[str]) -> None:
    rows = np.ascontiguousarray(vectors, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("refusing to write an empty embedding matrix")
    if rows.shape[0] != len(row_ids):
        raise ValueError("row id count does not match matrix rows")
    if not np.isfinite(rows).all():
        raise ValueError("matrix contains NaN or Inf values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows.shape[0], rows.shape[1], 0))
        fh.write(rows.tobytes())
        for row_id in row_ids:
            encoded = row_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)


def read_emb1(path: str | Path) -> tuple[np.ndarray, list[str]]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated EMB1 header")
    magic, version, row_count, dim, _ = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    payload_end = _HEADER.size + row_count * dim * 4
    if len(data) < payload_end:
        raise ValueError(f"{path}: truncated payload")
    vectors = (
        np.frombuffer(data, dtype="<f4", count=row_count * dim, offset=_HEADER.size)
        .reshape(row_count, dim)
        .copy()
    )
    row_ids = []
    offset = payload_end
    for _ in range(row_count):
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        row_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length
    return vectors, row_ids
