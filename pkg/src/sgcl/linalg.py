"""Sparse CSR container and pure dense helpers.

Training math is float64 throughout; feature matrices may arrive as float32
and are promoted at the point of use.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InsufficientSamplesError, ShapeError


class SparseCSR:
    """Compressed sparse row matrix with immutable structure.

    Invariants (see :meth:`validate`): ``row_ptr`` is nondecreasing with
    ``row_ptr[rows] == nnz``, column indices lie in ``[0, cols)`` and are
    strictly increasing within each row.
    """

    __slots__ = ("rows", "cols", "row_ptr", "col_idx", "values", "_scipy", "_scipy_t")

    def __init__(self, rows: int, cols: int, row_ptr, col_idx, values):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._scipy = None
        self._scipy_t = None

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    def validate(self) -> None:
        if self.rows < 0 or self.cols < 0:
            raise ShapeError("negative dimensions")
        if len(self.row_ptr) != self.rows + 1:
            raise ShapeError(
                f"row_ptr length {len(self.row_ptr)} != rows+1 = {self.rows + 1}"
            )
        if self.row_ptr[0] != 0:
            raise ShapeError("row_ptr[0] != 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ShapeError("row_ptr not nondecreasing")
        if self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise ShapeError("row_ptr[rows], col_idx and values disagree on nnz")
        if self.nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.cols:
                raise ShapeError("column index out of range")
            # strictly increasing inside each row: any non-increase must sit
            # exactly on a row boundary
            jumps = np.nonzero(np.diff(self.col_idx) <= 0)[0] + 1
            boundaries = self.row_ptr[1:-1]
            if not np.all(np.isin(jumps, boundaries)):
                raise ShapeError("column indices not strictly increasing within a row")

    # construction helpers ------------------------------------------------

    @classmethod
    def from_dense(cls, m: np.ndarray) -> "SparseCSR":
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError("expected a 2-D array")
        s = sp.csr_matrix(m)
        s.sort_indices()
        return cls(m.shape[0], m.shape[1], s.indptr, s.indices, s.data)

    @classmethod
    def from_scipy(cls, s) -> "SparseCSR":
        s = s.tocsr()
        s.sort_indices()
        s.sum_duplicates()
        return cls(s.shape[0], s.shape[1], s.indptr, s.indices, s.data)

    @classmethod
    def from_edges(
        cls, rows: int, cols: int, r: np.ndarray, c: np.ndarray, v: np.ndarray
    ) -> "SparseCSR":
        """Build from (row, col, value) triples; duplicates are summed."""
        s = sp.coo_matrix((v, (r, c)), shape=(rows, cols))
        return cls.from_scipy(s)

    @classmethod
    def identity(cls, n: int) -> "SparseCSR":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SparseCSR":
        return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64), [], [])

    # views ---------------------------------------------------------------

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=(self.rows, self.cols)
            )
        return self._scipy

    def to_scipy_t(self) -> sp.csr_matrix:
        if self._scipy_t is None:
            self._scipy_t = self.to_scipy().T.tocsr()
        return self._scipy_t

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def row_slice(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row i."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def __repr__(self) -> str:
        return f"SparseCSR({self.rows}x{self.cols}, nnz={self.nnz})"


def spmm(s: SparseCSR, b: np.ndarray) -> np.ndarray:
    """Sparse @ dense. Matches matmul(densify(s), b) to 1e-12 relative."""
    b = np.asarray(b, dtype=np.float64)
    if s.cols != b.shape[0]:
        raise ShapeError(f"spmm: {s.cols} columns vs {b.shape[0]} rows")
    return s.to_scipy() @ b


def cosine_similarity_matrix(m: np.ndarray) -> np.ndarray:
    """Pairwise row cosine similarities; zero-norm rows yield 0 everywhere.

    Diagonal entries of nonzero rows are exactly 1.
    """
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    z = np.where(norms[:, None] > 0, m / np.maximum(norms, 1e-300)[:, None], 0.0)
    sim = np.clip(z @ z.T, -1.0, 1.0)
    np.fill_diagonal(sim, np.where(norms > 0, 1.0, 0.0))
    return sim


def covariance(m: np.ndarray) -> np.ndarray:
    """Sample covariance (1/(N-1)) (M-mu)^T (M-mu) of the rows of m."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("covariance expects a 2-D array")
    n = m.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"covariance needs >= 2 rows, got {n}")
    centered = m - m.mean(axis=0, keepdims=True)
    return (centered.T @ centered) / (n - 1)
