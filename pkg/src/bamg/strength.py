"""Algebraic distances and the F-restricted strength graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sparse import graph_power

# ties at the threshold are kept
_TIE_RTOL = 1e-14


def jacobi_smoothed(A, V):
    """``v + r / diag(A)`` with ``r = -A v``: one local Jacobi update per row.

    This is the same right-hand side the interpolation fit uses.
    """
    d = A.diagonal()
    if np.any(d == 0.0):
        raise ZeroDivisionError(f"zero diagonal in row {int(np.flatnonzero(d == 0)[0])}")
    AV = A.to_scipy() @ V
    return np.ascontiguousarray(V - AV / d[:, None])


def algebraic_distance(A, tvs, i, j, Vt=None):
    """Reciprocal of the best caliber-one LS fit of row ``i`` from ``j``.

    Returns ``inf`` for an exact fit and ``0`` when ``j`` carries no signal
    (all its test-vector entries vanish).
    """
    if i == j:
        raise ValueError("algebraic distance needs i != j")
    if Vt is None:
        Vt = jacobi_smoothed(A, tvs.vectors)
    mu, _ = _kernels._pair_distance(Vt, tvs.vectors, tvs.weights, i, j, tvs.k)
    return mu


@dataclass(frozen=True)
class StrengthGraph:
    """Retained strong edges between F-vertices.

    ``indptr``/``indices`` span all ``n`` rows; rows outside ``vertices`` are
    empty. ``mu`` holds finite distances; edges with ``exact`` set came from a
    perfect fit and never enter the row maximum.
    """

    n: int
    vertices: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    mu: np.ndarray
    exact: np.ndarray
    depth: int
    theta_ad: float

    def edges(self):
        for i in self.vertices:
            for e in range(self.indptr[i], self.indptr[i + 1]):
                yield int(i), int(self.indices[e]), float(self.mu[e]), bool(self.exact[e])

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def n_edges(self):
        return int(self.indptr[-1])

    def symmetrized(self):
        """Undirected adjacency (CSR arrays) of the retained edges."""
        import scipy.sparse as sp
        M = sp.csr_matrix((np.ones(self.indices.size), self.indices, self.indptr),
                          shape=(self.n, self.n))
        S = (M + M.T).tocsr()
        S.sort_indices()
        return S.indptr.astype(np.int64), S.indices.astype(np.int64)

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write("# i j mu strong\n")
            for i, j, mu, ex in self.edges():
                fh.write(f"{i} {j} {'inf' if ex else repr(mu)} 1\n")


def threshold_edges(mu, exact, theta_ad):
    """Keep-mask for one row: ``mu >= theta * max(finite mu)``, exact edges always."""
    mu = np.asarray(mu, dtype=float)
    exact = np.asarray(exact, dtype=bool)
    finite = ~exact
    keep = exact.copy()
    if finite.any():
        mmax = mu[finite].max()
        keep |= finite & (mu >= theta_ad * mmax * (1.0 - _TIE_RTOL)) & (mu > 0.0)
    return keep


def build_strength_graph(A, tvs, vertices, d=1, theta_ad=0.5, adjacency=None, Vt=None):
    """Strength graph on ``vertices`` over the neighbours of ``A**d``."""
    if not 0.0 < theta_ad < 1.0:
        raise ValueError("theta_ad must lie in (0, 1)")
    n = A.n_rows
    vertices = np.unique(np.asarray(vertices, dtype=np.int64))
    if vertices.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return StrengthGraph(n, vertices, np.zeros(n + 1, dtype=np.int64), empty,
                             np.zeros(0), np.zeros(0, dtype=bool), d, theta_ad)
    G = adjacency if adjacency is not None else graph_power(A, d)
    if Vt is None:
        Vt = jacobi_smoothed(A, tvs.vectors)
    mask = np.zeros(n, dtype=np.bool_)
    mask[vertices] = True
    mu, exact, valid = _kernels.edge_distances(G.indptr, G.indices, mask, Vt,
                                               tvs.vectors, tvs.weights)
    keep = _kernels.threshold_rows(G.indptr, mu, exact, valid, theta_ad, _TIE_RTOL)
    rows = np.repeat(np.arange(n), np.diff(G.indptr))
    counts = np.bincount(rows[keep], minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return StrengthGraph(n, vertices, indptr, G.indices[keep].astype(np.int64),
                         np.where(exact[keep], 0.0, mu[keep]), exact[keep].copy(), d, theta_ad)
