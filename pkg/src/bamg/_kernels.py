"""Compiled inner loops.

Everything here works on raw CSR arrays (``indptr``, ``indices``, ``data``)
and dense ``(n, k)`` test-vector blocks so the Python layer can stay thin.
"""
import heapq

import numba as nb
import numpy as np

_jit = {"cache": True, "nogil": True}

MAX_CALIBER = 3


@nb.njit(**_jit)
def spmv(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    y = np.zeros(n)
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        y[i] = s
    return y


@nb.njit(**_jit)
def diagonal(indptr, indices, data):
    n = indptr.shape[0] - 1
    d = np.zeros(n)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                d[i] += data[p]
    return d


@nb.njit(**_jit)
def gs_sweep(indptr, indices, data, diag, x, b, forward):
    n = indptr.shape[0] - 1
    for t in range(n):
        i = t if forward else n - 1 - t
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def gs_sweep_block(indptr, indices, data, diag, X, forward):
    """Homogeneous sweep applied to every column of ``X`` (shape n x k)."""
    n = indptr.shape[0] - 1
    k = X.shape[1]
    s = np.empty(k)
    for t in range(n):
        i = t if forward else n - 1 - t
        s[:] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                a = data[p]
                for q in range(k):
                    s[q] -= a * X[j, q]
        for q in range(k):
            X[i, q] = s[q] / diag[i]


@nb.njit(**_jit)
def f_relax_sweep(indptr, indices, data, diag, u, is_f):
    n = indptr.shape[0] - 1
    for i in range(n):
        if not is_f[i]:
            continue
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * u[j]
        u[i] = s / diag[i]


@nb.njit(**_jit)
def edge_distances(g_indptr, g_indices, mask, Vt, V, w):
    """Caliber-one algebraic distances on the edges of a graph.

    Rows not in ``mask`` and columns not in ``mask`` are skipped (left at
    zero and flagged ``valid=False``). Returns ``(mu, exact, valid)``,
    edge-aligned with ``g_indices``.
    """
    n = g_indptr.shape[0] - 1
    m = g_indices.shape[0]
    k = V.shape[1]
    mu = np.zeros(m)
    exact = np.zeros(m, dtype=np.bool_)
    valid = np.zeros(m, dtype=np.bool_)
    for i in range(n):
        if not mask[i]:
            continue
        for e in range(g_indptr[i], g_indptr[i + 1]):
            j = g_indices[e]
            if not mask[j]:
                continue
            valid[e] = True
            mu_e, ex = _pair_distance(Vt, V, w, i, j, k)
            mu[e] = mu_e
            exact[e] = ex
    return mu, exact, valid


@nb.njit(**_jit)
def _pair_distance(Vt, V, w, i, j, k):
    den = 0.0
    num = 0.0
    for q in range(k):
        den += w[q] * V[j, q] * V[j, q]
        num += w[q] * Vt[i, q] * V[j, q]
    if den == 0.0:
        return 0.0, False
    p = num / den
    ls = 0.0
    for q in range(k):
        r = Vt[i, q] - p * V[j, q]
        ls += w[q] * r * r
    if ls < 1e-300:
        return np.inf, True
    return 1.0 / ls, False


@nb.njit(**_jit)
def accept_larger(ls_small, ls_large, dm, gamma):
    """Penalised comparison of nested-cardinality fits.

    The larger set wins when its LS value drops below ``ls_small`` raised to
    ``gamma * dm``. Above one that power rule would reward a worse fit, so
    there a tenfold decrease is required instead.
    """
    if ls_small >= 1.0:
        return ls_large < ls_small / 10.0
    return ls_large < ls_small ** (gamma * dm)


@nb.njit(**_jit)
def _subset_fit(G, g, Vt_i, Vn, w, idx, m, coef):
    """Solve the m x m normal equations on columns ``idx``; return LS or -1."""
    k = Vn.shape[1]
    # Cholesky of at most 3x3
    L = np.zeros((MAX_CALIBER, MAX_CALIBER))
    scale = 0.0
    for a in range(m):
        scale = max(scale, G[idx[a], idx[a]])
    if scale <= 0.0:
        return -1.0
    for a in range(m):
        for b in range(a + 1):
            s = G[idx[a], idx[b]]
            for c in range(b):
                s -= L[a, c] * L[b, c]
            if a == b:
                if s <= 1e-13 * scale:
                    return -1.0
                L[a, a] = np.sqrt(s)
            else:
                L[a, b] = s / L[b, b]
    y = np.zeros(MAX_CALIBER)
    for a in range(m):
        s = g[idx[a]]
        for c in range(a):
            s -= L[a, c] * y[c]
        y[a] = s / L[a, a]
    for a in range(m - 1, -1, -1):
        s = y[a]
        for c in range(a + 1, m):
            s -= L[c, a] * coef[c]
        coef[a] = s / L[a, a]
    ls = 0.0
    for q in range(k):
        r = Vt_i[q]
        for a in range(m):
            r -= coef[a] * Vn[idx[a], q]
        ls += w[q] * r * r
    return ls


@nb.njit(**_jit)
def select_row(Vt_i, Vn, w, caliber, gamma):
    """Exhaustive interpolatory-set search over the rows of ``Vn``.

    Returns ``(set, coef, ls, size)`` where ``set`` holds local column
    positions. ``size == 0`` means every candidate set was degenerate.
    Cardinalities are compared on LS relative to the empty fit
    ``sum w vt_i^2``, which lies in [0, 1] whatever the row's magnitude.
    """
    mcand = Vn.shape[0]
    k = Vn.shape[1]
    G = np.zeros((mcand, mcand))
    g = np.zeros(mcand)
    for a in range(mcand):
        for q in range(k):
            g[a] += w[q] * Vt_i[q] * Vn[a, q]
        for b in range(a + 1):
            s = 0.0
            for q in range(k):
                s += w[q] * Vn[a, q] * Vn[b, q]
            G[a, b] = s
            G[b, a] = s
    best_set = np.full((MAX_CALIBER + 1, MAX_CALIBER), -1, dtype=np.int64)
    best_coef = np.zeros((MAX_CALIBER + 1, MAX_CALIBER))
    best_ls = np.full(MAX_CALIBER + 1, np.inf)
    idx = np.zeros(MAX_CALIBER, dtype=np.int64)
    coef = np.zeros(MAX_CALIBER)
    cmax = min(caliber, mcand, MAX_CALIBER)
    for a in range(mcand):
        idx[0] = a
        ls = _subset_fit(G, g, Vt_i, Vn, w, idx, 1, coef)
        if ls >= 0.0 and ls < best_ls[1]:
            best_ls[1] = ls
            best_set[1, 0] = a
            best_coef[1, 0] = coef[0]
        if cmax < 2:
            continue
        for b in range(a + 1, mcand):
            idx[1] = b
            ls = _subset_fit(G, g, Vt_i, Vn, w, idx, 2, coef)
            if ls >= 0.0 and ls < best_ls[2]:
                best_ls[2] = ls
                best_set[2, 0] = a
                best_set[2, 1] = b
                best_coef[2, 0] = coef[0]
                best_coef[2, 1] = coef[1]
            if cmax < 3:
                continue
            for c in range(b + 1, mcand):
                idx[2] = c
                ls = _subset_fit(G, g, Vt_i, Vn, w, idx, 3, coef)
                if ls >= 0.0 and ls < best_ls[3]:
                    best_ls[3] = ls
                    best_set[3, 0] = a
                    best_set[3, 1] = b
                    best_set[3, 2] = c
                    for t in range(3):
                        best_coef[3, t] = coef[t]
    ref = 0.0
    for q in range(k):
        ref += w[q] * Vt_i[q] * Vt_i[q]
    if ref <= 0.0:
        ref = 1.0
    size = 0
    for m in range(1, cmax + 1):
        if best_ls[m] == np.inf:
            continue
        if size == 0 or accept_larger(best_ls[size] / ref, best_ls[m] / ref, m - size, gamma):
            size = m
    out_set = np.full(MAX_CALIBER, -1, dtype=np.int64)
    out_coef = np.zeros(MAX_CALIBER)
    if size == 0:
        return out_set, out_coef, np.inf, 0
    for t in range(size):
        out_set[t] = best_set[size, t]
        out_coef[t] = best_coef[size, t]
    return out_set, out_coef, best_ls[size], size


@nb.njit(**_jit)
def build_rows(f_rows, nb_indptr, nb_indices, Vt, V, w, caliber, gamma, cap):
    """Run ``select_row`` for every F-row.

    ``nb_indptr``/``nb_indices`` list each F-row's coarse neighbourhood (fine
    indices). Returns per-row column sets (fine indices, -1 padded),
    coefficients, LS values and set sizes; size 0 flags an empty or fully
    degenerate neighbourhood.
    """
    nf = f_rows.shape[0]
    k = V.shape[1]
    cols = np.full((nf, MAX_CALIBER), -1, dtype=np.int64)
    coefs = np.zeros((nf, MAX_CALIBER))
    lsv = np.full(nf, np.inf)
    sizes = np.zeros(nf, dtype=np.int64)
    for r in range(nf):
        i = f_rows[r]
        lo = nb_indptr[r]
        hi = nb_indptr[r + 1]
        m = hi - lo
        if m == 0:
            continue
        cand = nb_indices[lo:hi].copy()
        if m > cap:
            score = np.empty(m)
            for t in range(m):
                mu_t, ex = _pair_distance(Vt, V, w, i, cand[t], k)
                score[t] = np.inf if ex else mu_t
            order = np.argsort(-score, kind="mergesort")
            cand = np.sort(cand[order[:cap]])
            m = cap
        Vn = np.empty((m, k))
        for t in range(m):
            for q in range(k):
                Vn[t, q] = V[cand[t], q]
        s_set, s_coef, s_ls, size = select_row(Vt[i], Vn, w, caliber, gamma)
        sizes[r] = size
        lsv[r] = s_ls
        for t in range(size):
            cols[r, t] = cand[s_set[t]]
            coefs[r, t] = s_coef[t]
    return cols, coefs, lsv, sizes


@nb.njit(**_jit)
def threshold_rows(indptr, mu, exact, valid, theta, tie_rtol):
    n = indptr.shape[0] - 1
    keep = np.zeros(mu.shape[0], dtype=np.bool_)
    for i in range(n):
        mmax = -1.0
        for e in range(indptr[i], indptr[i + 1]):
            if valid[e] and not exact[e] and mu[e] > mmax:
                mmax = mu[e]
        cut = theta * mmax * (1.0 - tie_rtol)
        for e in range(indptr[i], indptr[i + 1]):
            if not valid[e]:
                continue
            if exact[e]:
                keep[e] = True
            elif mu[e] > 0.0 and mu[e] >= cut:
                keep[e] = True
    return keep


@nb.njit(cache=True)
def priority_mis(indptr, indices, cand_mask, degree):
    """Classical coloring pass: take the free candidate of highest priority.

    Priority starts at ``degree``; when a candidate is taken its free
    neighbours are blocked, and every free neighbour of a newly blocked point
    gains one. Ties go to the lowest index.
    """
    n = indptr.shape[0] - 1
    lam = degree.copy()
    state = np.zeros(n, dtype=np.int8)  # 0 free, 1 chosen, 2 blocked
    heap = [(np.int64(0), np.int64(0))]
    heap.pop()
    for i in range(n):
        if cand_mask[i]:
            heapq.heappush(heap, (-lam[i], np.int64(i)))
        else:
            state[i] = 2
    while len(heap) > 0:
        key, i = heapq.heappop(heap)
        if state[i] != 0 or -key != lam[i]:
            continue
        state[i] = 1
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            if state[j] != 0:
                continue
            state[j] = 2
            for f in range(indptr[j], indptr[j + 1]):
                k = indices[f]
                if state[k] == 0:
                    lam[k] += 1
                    heapq.heappush(heap, (-lam[k], np.int64(k)))
    return state == 1
