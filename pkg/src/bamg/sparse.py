"""Compressed-row matrices, graph powers and relaxation sweeps."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import _kernels


class SparseMatrix:
    """Immutable CSR matrix.

    Rows are stored with strictly increasing column indices. Products between
    matrices are delegated to :mod:`scipy.sparse`; matrix-vector products and
    relaxation use the compiled row-major kernels so the summation order is
    fixed.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values",
                 "symmetric", "_diag", "_csr")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values,
                 symmetric=False):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.symmetric = bool(symmetric)
        self._diag = None
        self._csr = None
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)
        self._check()

    def _check(self):
        ro = self.row_offsets
        if ro.shape[0] != self.n_rows + 1 or ro[0] != 0:
            raise ValueError("row_offsets must have length n_rows+1 and start at 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if ro[-1] != self.col_indices.shape[0] or ro[-1] != self.values.shape[0]:
            raise ValueError("row_offsets[-1] must equal the number of stored entries")
        ci = self.col_indices
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            rows = np.repeat(np.arange(self.n_rows), np.diff(ro))
            same_row = rows[1:] == rows[:-1]
            if np.any((np.diff(ci) <= 0) & same_row):
                raise ValueError("column indices must be strictly increasing within rows")

    # construction -------------------------------------------------------
    @classmethod
    def from_scipy(cls, M, symmetric=False):
        M = sp.csr_matrix(M, dtype=np.float64)
        M.sum_duplicates()
        M.sort_indices()
        return cls(M.shape[0], M.shape[1], M.indptr, M.indices, M.data, symmetric)

    @classmethod
    def from_dense(cls, D, symmetric=False):
        return cls.from_scipy(sp.csr_matrix(np.asarray(D, dtype=float)), symmetric)

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"), symmetric=True)

    def to_scipy(self):
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols))
        return self._csr

    def toarray(self):
        return self.to_scipy().toarray()

    # queries --------------------------------------------------------------
    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    def diagonal(self):
        if self._diag is None:
            self._diag = _kernels.diagonal(self.row_offsets, self.col_indices, self.values)
            self._diag.setflags(write=False)
        return self._diag

    def row(self, i):
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def is_symmetric(self, tol=1e-12):
        if self.n_rows != self.n_cols:
            return False
        M = self.to_scipy()
        diff = abs(M - M.T)
        scale = abs(self.values).max() if self.nnz else 0.0
        return diff.nnz == 0 or diff.max() <= tol * max(scale, 1e-300)

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T, self.symmetric)

    @property
    def T(self):
        return self.transpose()

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            if self.n_cols != other.n_rows:
                raise ValueError(f"dimension mismatch: {self.shape} @ {other.shape}")
            return SparseMatrix.from_scipy(self.to_scipy() @ other.to_scipy())
        return spmv(self, other)

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class AdjacencyGraph:
    """Binary adjacency in CSR layout, no self-loops, sorted neighbour lists."""

    n_vertices: int
    indptr: np.ndarray
    indices: np.ndarray

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self, i):
        return int(self.indptr[i + 1] - self.indptr[i])


def spmv(A, x):
    """Return ``A @ x`` summed row by row in stored order."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.n_cols:
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, "
                         f"vector has shape {x.shape}")
    return _kernels.spmv(A.row_offsets, A.col_indices, A.values, x)


def _pattern(A):
    M = A.to_scipy() if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    B = sp.csr_matrix((np.ones(M.nnz, dtype=np.int64), M.indices.copy(), M.indptr.copy()),
                      shape=M.shape)
    return B


def graph_power(A, d):
    """Adjacency of the pattern of ``|A|^d`` without self-loops.

    Only the sparsity pattern is used; cancellation in ``A^d`` is ignored.
    """
    if d < 1:
        raise ValueError(f"graph depth must be >= 1, got {d}")
    if A.n_rows != A.n_cols:
        raise ValueError("graph_power needs a square matrix")
    B = _pattern(A)
    P = B
    for _ in range(d - 1):
        P = P @ B
        P.data[:] = 1
    P = P.tolil()
    P.setdiag(0)
    P = P.tocsr()
    P.eliminate_zeros()
    P.sort_indices()
    return AdjacencyGraph(A.n_rows, P.indptr.astype(np.int64), P.indices.astype(np.int64))


def _checked_diagonal(A, rows=None):
    d = A.diagonal()
    bad = np.flatnonzero(d == 0.0) if rows is None else rows[d[rows] == 0.0]
    if bad.size:
        raise ZeroDivisionError(f"zero diagonal in row {int(bad[0])}")
    return d


def gauss_seidel_sweep(A, x, b, ordering="forward"):
    """One lexicographic Gauss-Seidel sweep on ``A x = b``, in place."""
    if ordering not in ("forward", "backward"):
        raise ValueError(f"unknown ordering {ordering!r}")
    d = _checked_diagonal(A)
    b = np.ascontiguousarray(b, dtype=np.float64)
    _kernels.gs_sweep(A.row_offsets, A.col_indices, A.values, d, x, b,
                      ordering == "forward")
    return x


def relax_block(A, X, sweeps, ordering="forward"):
    """Homogeneous Gauss-Seidel on every column of ``X`` (n x k), in place."""
    d = _checked_diagonal(A)
    for _ in range(sweeps):
        _kernels.gs_sweep_block(A.row_offsets, A.col_indices, A.values, d, X,
                                ordering == "forward")
    return X


def f_relaxation_sweep(A, partition, u):
    """Forward Gauss-Seidel on the F-rows of ``A u = 0``; C-entries untouched."""
    is_f = partition.f_mask()
    d = _checked_diagonal(A, np.flatnonzero(is_f))
    _kernels.f_relax_sweep(A.row_offsets, A.col_indices, A.values, d, u, is_f)
    return u


def write_matrix_market(A, path):
    scipy.io.mmwrite(str(path), A.to_scipy().tocoo(), precision=17,
                     symmetry="general")


def read_matrix_market(path):
    return SparseMatrix.from_scipy(scipy.io.mmread(str(Path(path))).tocsr())
