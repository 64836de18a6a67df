"""Least-squares interpolation with exhaustive interpolatory-set search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import _kernels
from .sparse import SparseMatrix, graph_power
from .strength import jacobi_smoothed

log = logging.getLogger(__name__)

NEIGHBORHOOD_CAP = 24


class DegenerateSetError(np.linalg.LinAlgError):
    pass


class InterpolationError(RuntimeError):
    """An F-row could not be interpolated; ``points`` lists the offending rows."""

    def __init__(self, msg, points=()):
        super().__init__(msg)
        self.points = np.asarray(points, dtype=np.int64)


def ls_fit(tvs, A, i, W, Vt=None):
    """Weighted LS fit of the smoothed row ``i`` from the test-vector rows ``W``.

    Minimises ``sum_k w_k (vt_i^k - sum_{j in W} p_j v_j^k)^2`` through the
    ``|W| x |W|`` normal equations. Returns ``(p, ls_value)``.
    """
    W = np.asarray(W, dtype=np.int64)
    if W.size < 1:
        raise ValueError("interpolatory set must not be empty")
    if Vt is None:
        Vt = jacobi_smoothed(A, tvs.vectors)
    w = tvs.weights
    VW = tvs.vectors[W].T  # k x |W|
    t = Vt[i]
    G = VW.T @ (w[:, None] * VW)
    g = VW.T @ (w * t)
    try:
        cf = sla.cho_factor(G)
    except np.linalg.LinAlgError:
        raise DegenerateSetError(f"degenerate interpolatory set {W.tolist()} for row {i}") from None
    if np.diag(cf[0]).min() ** 2 <= 1e-13 * np.diag(G).max():
        raise DegenerateSetError(f"degenerate interpolatory set {W.tolist()} for row {i}")
    p = sla.cho_solve(cf, g)
    r = t - VW @ p
    return p, float(np.sum(w * r * r))


def prefer_larger(ls_small, ls_large, size_diff, gamma):
    """True if a set ``size_diff`` points larger earns its extra entries."""
    return bool(_kernels.accept_larger(float(ls_small), float(ls_large), int(size_diff), float(gamma)))


def choose_cardinality(best_ls, gamma, ref=1.0):
    """Walk cardinalities upwards from the best singleton under the penalty rule.

    ``best_ls[m]`` is the best LS value among sets of size ``m + 1`` (``inf``
    where none exists). Values are divided by ``ref`` (the empty-set LS of
    the row) before comparison. Returns the chosen size.
    """
    ref = ref if ref > 0.0 else 1.0
    size = 0
    for m, ls in enumerate(best_ls, start=1):
        if not np.isfinite(ls):
            continue
        if size == 0 or prefer_larger(best_ls[size - 1] / ref, ls / ref, m - size, gamma):
            size = m
    return size


def select_row(tvs, A, i, neighborhood, caliber=2, gamma=1.5, Vt=None):
    """Best interpolatory set for row ``i`` among subsets of ``neighborhood``.

    Returns ``(C_i, p_i, ls_value)`` with ``C_i`` as fine indices.
    """
    nbh = np.unique(np.asarray(neighborhood, dtype=np.int64))
    if nbh.size == 0:
        raise InterpolationError(f"empty coarse neighbourhood for row {i}")
    if caliber < 1 or caliber > _kernels.MAX_CALIBER:
        raise ValueError(f"caliber must lie in 1..{_kernels.MAX_CALIBER}")
    if Vt is None:
        Vt = jacobi_smoothed(A, tvs.vectors)
    Vn = np.ascontiguousarray(tvs.vectors[nbh])
    s, coef, ls, size = _kernels.select_row(np.ascontiguousarray(Vt[i]), Vn, tvs.weights,
                                            caliber, gamma)
    if size == 0:
        raise InterpolationError(f"all candidate interpolatory sets of row {i} are degenerate")
    return nbh[s[:size]], coef[:size].copy(), float(ls)


def select_row_reference(tvs, A, i, neighborhood, caliber=2, gamma=1.5):
    """Plain-Python twin of :func:`select_row` built on :func:`ls_fit`."""
    nbh = sorted(set(int(j) for j in neighborhood))
    Vt = jacobi_smoothed(A, tvs.vectors)
    best = []
    for m in range(1, min(caliber, len(nbh)) + 1):
        cur = (np.inf, None, None)
        for W in itertools.combinations(nbh, m):
            try:
                p, ls = ls_fit(tvs, A, i, W, Vt)
            except DegenerateSetError:
                continue
            if ls < cur[0]:
                cur = (ls, W, p)
        best.append(cur)
    ref = float(np.sum(tvs.weights * Vt[i] ** 2))
    size = choose_cardinality([b[0] for b in best], gamma, ref)
    if size == 0:
        raise InterpolationError(f"all candidate interpolatory sets of row {i} are degenerate")
    ls, W, p = best[size - 1]
    return np.array(W), p, ls


@dataclass(frozen=True)
class Interpolation:
    P: SparseMatrix
    partition: object
    caliber: int
    d_ls: int
    gamma: float
    f_rows: np.ndarray
    sets: np.ndarray      # (nF, MAX_CALIBER) fine indices, -1 padded
    coefs: np.ndarray     # (nF, MAX_CALIBER)
    ls_values: np.ndarray

    def rows(self):
        """Yield ``(i, C_i, p_i, ls)`` for each F-row."""
        for r, i in enumerate(self.f_rows):
            sz = int((self.sets[r] >= 0).sum())
            yield int(i), self.sets[r, :sz].tolist(), self.coefs[r, :sz].tolist(), float(self.ls_values[r])

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write("# i C_i p_i ls\n")
            for i, Ci, pi, ls in self.rows():
                fh.write(f"{i} {','.join(map(str, Ci))} "
                         f"{','.join(repr(x) for x in pi)} {ls!r}\n")


def coarse_neighborhoods(G, partition, rows):
    """CSR lists of ``C ∩ V_{d,i}`` for each ``i`` in ``rows``."""
    is_c = partition.c_mask()
    starts, ends = G.indptr[rows], G.indptr[rows + 1]
    counts = ends - starts
    flat = np.concatenate([G.indices[s:e] for s, e in zip(starts, ends)]) if rows.size else np.zeros(0, np.int64)
    owner = np.repeat(np.arange(rows.size), counts)
    keep = is_c[flat]
    cnt = np.bincount(owner[keep], minlength=rows.size)
    indptr = np.concatenate([[0], np.cumsum(cnt)]).astype(np.int64)
    return indptr, flat[keep].astype(np.int64)


def _coarse_free_blocks(A, partition):
    """Mask of points whose connected component in the graph of ``A`` has no C-point."""
    ncomp, label = csgraph.connected_components(A.to_scipy(), directed=False)
    has_c = np.zeros(ncomp, dtype=bool)
    has_c[label[partition.C]] = True
    return ~has_c[label]


def build_interpolation(A, tvs, partition, caliber=2, d_ls=4, gamma=1.5,
                        adjacency=None, cap=NEIGHBORHOOD_CAP):
    """Interpolation ``P`` (n x n_c): identity on C, LS-fitted rows on F."""
    if d_ls < 1:
        raise ValueError("d_ls must be >= 1")
    if caliber < 1 or caliber > _kernels.MAX_CALIBER:
        raise ValueError(f"caliber must lie in 1..{_kernels.MAX_CALIBER}")
    n = A.n_rows
    G = adjacency if adjacency is not None else graph_power(A, d_ls)
    Vt = jacobi_smoothed(A, tvs.vectors)
    f_rows = partition.F
    nb_ptr, nb_idx = coarse_neighborhoods(G, partition, f_rows)
    empty = np.flatnonzero(np.diff(nb_ptr) == 0)
    if empty.size:
        # a block of A holding no C-point at all is left to relaxation (zero
        # rows); anywhere else an empty neighbourhood means C is inadequate
        blocked = _coarse_free_blocks(A, partition)
        stuck = empty[~blocked[f_rows[empty]]]
        if stuck.size:
            raise InterpolationError(
                f"F-point {int(f_rows[stuck[0]])} has no C-point within distance {d_ls} "
                f"({stuck.size} such points)", f_rows[stuck])
        keep = np.ones(f_rows.size, dtype=bool)
        keep[empty] = False
        f_rows = f_rows[keep]
        nb_ptr, nb_idx = coarse_neighborhoods(G, partition, f_rows)
    sets, coefs, lsv, sizes = _kernels.build_rows(
        f_rows, nb_ptr, nb_idx, Vt, tvs.vectors, tvs.weights, caliber, gamma, cap)
    bad = np.flatnonzero(sizes == 0)
    if bad.size:
        raise InterpolationError(
            f"all candidate interpolatory sets of F-point {int(f_rows[bad[0]])} are degenerate",
            f_rows[bad])
    cidx = partition.coarse_index()
    C = partition.C
    r_rows = [C, np.repeat(f_rows, sizes)]
    valid = sets >= 0
    r_cols = [np.arange(C.size), cidx[sets[valid]]]
    r_vals = [np.ones(C.size), coefs[valid]]
    P = sp.csr_matrix((np.concatenate(r_vals), (np.concatenate(r_rows), np.concatenate(r_cols))),
                      shape=(n, C.size))
    return Interpolation(SparseMatrix.from_scipy(P), partition, caliber, d_ls, gamma,
                         f_rows, sets, coefs, lsv)


def interpolate_promoting(A, tvs, partition, caliber=2, d_ls=4, gamma=1.5, tries=3,
                          adjacency=None):
    """:func:`build_interpolation`, turning unreachable F-points into C-points.

    Returns ``(interpolation, partition)``; the partition grows only when a
    first attempt reported points it could not interpolate.
    """
    from .coarsening import Partition
    for _ in range(tries):
        try:
            return build_interpolation(A, tvs, partition, caliber, d_ls, gamma,
                                       adjacency=adjacency), partition
        except InterpolationError as exc:
            if not exc.points.size:
                raise
            log.info("promoting %d F-points to C", exc.points.size)
            mask = partition.c_mask()
            mask[exc.points] = True
            partition = Partition.from_mask(mask)
    return build_interpolation(A, tvs, partition, caliber, d_ls, gamma,
                               adjacency=adjacency), partition

