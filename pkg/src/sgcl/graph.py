"""Graph container, SGR1 on-disk format, adjacency normalization, and the
two stochastic view augmentations (edge dropping, dimension-wise feature
masking)."""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, FormatError, ShapeError
from .linalg import SparseCSR

MAGIC = b"SGR1"

# header: magic, u32 n, u64 directed-edge count, u32 F, u32 num_classes
_HEADER = struct.Struct("<4sIQII")


class Graph:
    """Immutable undirected attributed graph.

    The adjacency stores both directions of every edge with value 1 and no
    self-loops. Features are float32 on disk and in memory; training code
    promotes to float64 where it matters.
    """

    __slots__ = ("n", "adjacency", "features", "labels", "num_classes", "name")

    def __init__(self, adjacency: SparseCSR, features: np.ndarray,
                 labels: np.ndarray | None = None, num_classes: int = 0,
                 name: str = ""):
        self.adjacency = adjacency
        self.features = np.ascontiguousarray(features, dtype=np.float32)
        self.labels = None if labels is None else np.ascontiguousarray(labels, dtype=np.int32)
        self.num_classes = int(num_classes)
        self.name = name
        self.n = adjacency.rows
        self.validate()

    def validate(self) -> None:
        a = self.adjacency
        a.validate()
        if a.rows != a.cols:
            raise ShapeError(f"adjacency must be square, got {a.rows}x{a.cols}")
        if self.features.ndim != 2 or self.features.shape[0] != a.rows:
            raise ShapeError(
                f"features shape {self.features.shape} does not match n={a.rows}")
        s = a.to_scipy()
        if a.nnz:
            if not np.all(a.values == 1.0):
                raise ShapeError("adjacency values must all be 1")
            if s.diagonal().any():
                raise ShapeError("adjacency must have a zero diagonal")
            if (s != s.T).nnz != 0:
                raise ShapeError("adjacency pattern must be symmetric")
        if self.labels is not None:
            if len(self.labels) != self.n:
                raise ShapeError(f"labels length {len(self.labels)} != n={self.n}")
            known = self.labels[self.labels >= 0]
            if known.size and (self.num_classes <= 0 or known.max() >= self.num_classes):
                raise ShapeError("labels outside [0, num_classes)")

    @property
    def num_directed_edges(self) -> int:
        return self.adjacency.nnz

    def __repr__(self) -> str:
        return (f"Graph({self.name or 'unnamed'}: n={self.n}, "
                f"E={self.num_directed_edges}, F={self.features.shape[1]}, "
                f"classes={self.num_classes})")


@dataclass
class GraphView:
    """An augmented view: same nodes, possibly fewer edges / masked features."""

    n: int
    adjacency: SparseCSR
    features: np.ndarray


# ---------------------------------------------------------------------------
# on-disk format
#
# Little-endian layout:
#   magic "SGR1" | u32 n | u64 E | u32 F | u32 num_classes
#   | u64 row_ptr[n+1] | u32 col_idx[E] | f32 features[n*F] | i32 labels[n]
#   | u32 CRC32 of everything before it
# Adjacency values are implicitly 1 and not stored.


def save_graph(g: Graph, path: str | os.PathLike) -> None:
    n = g.n
    e = g.adjacency.nnz
    f = g.features.shape[1]
    labels = g.labels if g.labels is not None else np.full(n, -1, dtype=np.int32)
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, n, e, f, g.num_classes)
    blob += g.adjacency.row_ptr.astype("<u8").tobytes()
    blob += g.adjacency.col_idx.astype("<u4").tobytes()
    blob += np.ascontiguousarray(g.features, dtype="<f4").tobytes()
    blob += labels.astype("<i4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_graph(path: str | os.PathLike) -> Graph:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + 4:
        raise FormatError("file too short for header", offset=len(data))
    magic, n, e, f, num_classes = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)

    off_row_ptr = _HEADER.size
    off_col_idx = off_row_ptr + 8 * (n + 1)
    off_features = off_col_idx + 4 * e
    off_labels = off_features + 4 * n * f
    off_crc = off_labels + 4 * n
    expected = off_crc + 4
    if len(data) != expected:
        raise FormatError(
            f"truncated or oversized file: expected {expected} bytes, got {len(data)}",
            offset=min(len(data), expected))

    stored_crc = struct.unpack_from("<I", data, off_crc)[0]
    actual_crc = zlib.crc32(data[:off_crc]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}",
            offset=off_crc)

    row_ptr = np.frombuffer(data, dtype="<u8", count=n + 1, offset=off_row_ptr).astype(np.int64)
    col_idx = np.frombuffer(data, dtype="<u4", count=e, offset=off_col_idx).astype(np.int64)
    features = np.frombuffer(data, dtype="<f4", count=n * f, offset=off_features)
    features = features.reshape(n, f).copy()
    labels = np.frombuffer(data, dtype="<i4", count=n, offset=off_labels).astype(np.int32)

    adjacency = SparseCSR(n, n, row_ptr, col_idx, np.ones(e))
    try:
        adjacency.validate()
    except ShapeError as exc:
        raise FormatError(f"CSR invariant violated: {exc}", offset=off_row_ptr) from exc

    has_labels = bool(np.any(labels >= 0))
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    try:
        return Graph(adjacency, features,
                     labels=labels if has_labels else None,
                     num_classes=num_classes, name=name)
    except ShapeError as exc:
        raise FormatError(f"graph invariant violated: {exc}", offset=off_row_ptr) from exc


# ---------------------------------------------------------------------------
# propagation operator


def normalized_adjacency(g: Graph) -> SparseCSR:
    """Symmetric normalization of A with self-loops added.

    Entry (i,j) = 1/sqrt((d_i+1)(d_j+1)) wherever A+I has an entry; isolated
    nodes therefore keep a unit self-loop.
    """
    a = g.adjacency.to_scipy()
    s = (a + sp.identity(g.n, format="csr")).tocoo()
    deg_tilde = np.asarray(a.sum(axis=1)).ravel() + 1.0
    # single sqrt of the integer product keeps k-regular graphs exact:
    # 1/sqrt((k+1)^2) == 1/(k+1) bit-for-bit
    vals = 1.0 / np.sqrt(deg_tilde[s.row] * deg_tilde[s.col])
    return SparseCSR.from_edges(g.n, g.n, s.row, s.col, vals)


# ---------------------------------------------------------------------------
# augmentations


def _as_view(g: Graph | GraphView) -> GraphView:
    if isinstance(g, GraphView):
        return g
    return GraphView(n=g.n, adjacency=g.adjacency, features=g.features)


def drop_edges(g: Graph | GraphView, p: float, rng: np.random.Generator) -> GraphView:
    """Remove each undirected edge with probability p (both directions go
    together); features pass through untouched."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"drop probability {p} outside [0, 1]")
    src = _as_view(g)
    coo = src.adjacency.to_scipy().tocoo()
    upper = coo.row < coo.col
    u = coo.row[upper]
    v = coo.col[upper]
    keep = rng.random(len(u)) >= p
    uk, vk = u[keep], v[keep]
    adj = SparseCSR.from_edges(
        src.n, src.n,
        np.concatenate([uk, vk]), np.concatenate([vk, uk]),
        np.ones(2 * len(uk)))
    return GraphView(n=src.n, adjacency=adj, features=src.features)


def mask_features(g: Graph | GraphView, p: float, rng: np.random.Generator) -> GraphView:
    """Zero a Bernoulli(p) subset of feature DIMENSIONS for every node (one
    mask per view, shared across nodes); adjacency passes through untouched."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"mask probability {p} outside [0, 1]")
    src = _as_view(g)
    f = src.features.shape[1]
    keep = (rng.random(f) >= p).astype(src.features.dtype)
    return GraphView(n=src.n, adjacency=src.adjacency, features=src.features * keep[None, :])
