"""Standalone writer/reader for the engine's SGR1 graph container.

Implemented from the published byte layout so this package has no import
dependency on the engine:

    magic "SGR1" | u32 n | u64 E | u32 F | u32 num_classes
    | u64 row_ptr[n+1] | u32 col_idx[E] | f32 features[n*F] | i32 labels[n]
    | u32 CRC32 of everything before it

Little-endian throughout. Adjacency values are implicitly 1; the stored
pattern must be symmetric with a zero diagonal and sorted, duplicate-free
columns per row.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MAGIC = b"SGR1"
_HEADER = struct.Struct("<4sIQII")


@dataclass
class SgrPayload:
    """Decoded SGR1 contents, plain arrays only."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    @property
    def directed_edges(self) -> int:
        return int(len(self.col_idx))


def check_csr(n: int, row_ptr: np.ndarray, col_idx: np.ndarray) -> None:
    """Raise ValidationError naming the first violated CSR invariant."""
    if row_ptr.shape != (n + 1,):
        raise ValidationError(f"row_ptr length {len(row_ptr)} != n+1={n + 1}")
    if row_ptr[0] != 0:
        raise ValidationError("row_ptr[0] != 0")
    if row_ptr[-1] != len(col_idx):
        raise ValidationError(
            f"row_ptr[-1]={row_ptr[-1]} != nnz={len(col_idx)}")
    if np.any(np.diff(row_ptr) < 0):
        raise ValidationError("row_ptr not monotone")
    if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= n):
        raise ValidationError("column index out of range")
    for i in range(n):
        row = col_idx[row_ptr[i]: row_ptr[i + 1]]
        if len(row) > 1 and np.any(np.diff(row) <= 0):
            raise ValidationError(f"row {i} columns not strictly increasing")
        if np.any(row == i):
            raise ValidationError(f"self-loop stored at node {i}")


def check_symmetry(n: int, row_ptr: np.ndarray, col_idx: np.ndarray) -> None:
    pairs = set()
    for i in range(n):
        for j in col_idx[row_ptr[i]: row_ptr[i + 1]]:
            pairs.add((i, int(j)))
    for i, j in pairs:
        if (j, i) not in pairs:
            raise ValidationError(f"edge ({i},{j}) lacks its reverse")


def write_sgr1(path: str | os.PathLike, row_ptr: np.ndarray,
               col_idx: np.ndarray, features: np.ndarray,
               labels: np.ndarray, num_classes: int) -> None:
    n = features.shape[0]
    f = features.shape[1]
    row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
    col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
    check_csr(n, row_ptr, col_idx)
    if labels.shape != (n,):
        raise ValidationError(f"labels shape {labels.shape} != ({n},)")

    blob = bytearray()
    blob += _HEADER.pack(MAGIC, n, len(col_idx), f, int(num_classes))
    blob += row_ptr.astype("<u8").tobytes()
    blob += col_idx.astype("<u4").tobytes()
    blob += np.ascontiguousarray(features, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(labels, dtype="<i4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_sgr1(path: str | os.PathLike) -> SgrPayload:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + 4:
        raise ValidationError("file too short for header")
    magic, n, e, f, num_classes = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r}")

    off_row_ptr = _HEADER.size
    off_col_idx = off_row_ptr + 8 * (n + 1)
    off_features = off_col_idx + 4 * e
    off_labels = off_features + 4 * n * f
    off_crc = off_labels + 4 * n
    if len(data) != off_crc + 4:
        raise ValidationError(
            f"truncated or oversized: expected {off_crc + 4} bytes, "
            f"got {len(data)}")
    stored = struct.unpack_from("<I", data, off_crc)[0]
    actual = zlib.crc32(data[:off_crc]) & 0xFFFFFFFF
    if stored != actual:
        raise ValidationError(
            f"CRC mismatch: stored {stored:#010x}, computed {actual:#010x}")

    row_ptr = np.frombuffer(data, dtype="<u8", count=n + 1,
                            offset=off_row_ptr).astype(np.int64)
    col_idx = np.frombuffer(data, dtype="<u4", count=e,
                            offset=off_col_idx).astype(np.int64)
    features = np.frombuffer(data, dtype="<f4", count=n * f,
                             offset=off_features).reshape(n, f).copy()
    labels = np.frombuffer(data, dtype="<i4", count=n,
                           offset=off_labels).astype(np.int32)
    check_csr(n, row_ptr, col_idx)
    return SgrPayload(n=n, row_ptr=row_ptr, col_idx=col_idx,
                      features=features, labels=labels,
                      num_classes=num_classes)
