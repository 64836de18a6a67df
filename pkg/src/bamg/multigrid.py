"""Galerkin hierarchies, two-grid rate measurement, bootstrap setup and AMLI-FCG."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels, _rng
from .sparse import SparseMatrix, graph_power, spmv

log = logging.getLogger(__name__)

_SOLVE_STREAM = 3


class DivergenceError(RuntimeError):
    pass


class MaxIterationsError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


def galerkin(A, P):
    """``P^T A P``, symmetrised."""
    if A.n_cols != P.n_rows or A.n_rows != A.n_cols:
        raise ValueError(f"dimension mismatch: A {A.shape}, P {P.shape}")
    Ps = P.to_scipy()
    Ac = (Ps.T @ A.to_scipy() @ Ps).tocsr()
    Ac = 0.5 * (Ac + Ac.T)
    return SparseMatrix.from_scipy(Ac, symmetric=True)


@dataclass
class SolveReport:
    rho: float = float("nan")
    gamma_g: float = float("nan")
    gamma_o: float = float("nan")
    coarse_fraction: float = float("nan")
    iterations: int = 0
    work_units: float = float("nan")
    residuals: list = field(default_factory=list)
    restarts: int = 0
    meta: dict = field(default_factory=dict)


class _Smoother:
    """Gauss-Seidel on one level with a cached checked diagonal."""

    def __init__(self, A):
        self.A = A
        d = A.diagonal()
        if np.any(d == 0.0):
            raise ZeroDivisionError(f"zero diagonal in row {int(np.flatnonzero(d == 0)[0])}")
        self.d = np.ascontiguousarray(d)

    def sweep(self, x, b, forward=True):
        A = self.A
        _kernels.gs_sweep(A.row_offsets, A.col_indices, A.values, self.d, x, b, forward)


class _DirectSolver:
    def __init__(self, A):
        self.factor = sla.cho_factor(A.toarray())

    def __call__(self, b):
        return sla.cho_solve(self.factor, b)


def two_grid_cycle(A, P, smoother, coarse, x, b, pre=2, post=2, symmetric=False):
    """One cycle: forward GS, exact coarse correction, GS again.

    Post-smoothing runs forward too unless ``symmetric`` asks for backward
    sweeps (needed when the cycle preconditions CG).
    """
    for _ in range(pre):
        smoother.sweep(x, b, True)
    r = b - spmv(A, x)
    x += P.to_scipy() @ coarse(P.to_scipy().T @ r)
    for _ in range(post):
        smoother.sweep(x, b, not symmetric)
    return x


def a_norm(A, x):
    return float(np.sqrt(max(np.dot(spmv(A, x), x), 0.0)))


def two_grid_solve_rate(A, P, pre_sweeps=2, post_sweeps=2, eta=100, seed=0, Ac=None):
    """Asymptotic two-grid rate ``||e_eta||_A / ||e_{eta-1}||_A`` on ``A x = 0``."""
    if Ac is None:
        Ac = galerkin(A, P)
    if Ac.n_rows > 20000:
        raise ValueError("coarse system too large for the dense direct solver")
    smoother = _Smoother(A)
    coarse = _DirectSolver(Ac)
    rng = _rng.stream(seed, _SOLVE_STREAM)
    e = _rng.uniform_centered(rng, A.n_rows)
    zero = np.zeros(A.n_rows)
    nrm0 = a_norm(A, e)
    e /= nrm0
    rho = 0.0
    history = []
    for _ in range(eta):
        two_grid_cycle(A, P, smoother, coarse, e, zero, pre_sweeps, post_sweeps)
        nrm = a_norm(A, e)
        history.append(nrm)
        if nrm > 1e6:
            raise DivergenceError(f"two-grid error A-norm grew by {nrm:.3e}")
        rho = nrm
        if nrm == 0.0:
            break
        e /= nrm  # the iteration is linear, rescaling keeps the ratio
    n, nc = A.n_rows, Ac.n_rows
    return SolveReport(
        rho=float(rho), gamma_g=(n + nc) / n, gamma_o=(A.nnz + Ac.nnz) / A.nnz,
        coarse_fraction=nc / n, iterations=eta,
        meta={"rate_history_tail": history[-5:]})


# -- hierarchy -----------------------------------------------------------

@dataclass
class Level:
    """One grid: operator ``A``, mass-like ``T`` and the transfer to the next level."""

    A: SparseMatrix
    T: SparseMatrix
    interp: object = None      # Interpolation to the next coarser level
    coarsening: object = None  # CoarseningResult that produced ``interp``

    @property
    def n(self):
        return self.A.n_rows

    @property
    def partition(self):
        return None if self.coarsening is None else self.coarsening.partition


@dataclass
class SetupParams:
    c: int = 2
    d: int = 2
    d_ls: int | None = None
    gamma: float = 1.5
    theta_ad: float = 0.5
    delta: float = 0.7
    nu: int = 5
    k_r: int = 8
    k_e: int = 8
    mu1: int = 4
    mu2: int = 4
    cycles: int = 2
    max_levels: int = 10
    coarse_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.d_ls is None:
            self.d_ls = self.d + 2
        for name in ("c", "d", "d_ls", "k_r", "mu1", "mu2", "max_levels", "coarse_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.k_e < 0 or self.cycles < 0:
            raise ValueError("k_e and cycles must be non-negative")
        if self.coarse_size < self.k_r + self.k_e:
            raise ValueError("coarse_size must be at least k_r + k_e")


@dataclass
class Hierarchy:
    levels: list
    params: SetupParams
    eigenvalues: np.ndarray = None    # Rayleigh quotients of the finest-level eigen-vectors
    eigenvectors: np.ndarray = None   # finest-level approximations, column-wise
    work_units: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_levels(self):
        return len(self.levels)

    def complexity(self):
        """``(gamma_g, gamma_o)`` with the finest level counted."""
        n0, z0 = self.levels[0].n, self.levels[0].A.nnz
        return (sum(l.n for l in self.levels) / n0,
                sum(l.A.nnz for l in self.levels) / z0)

    def describe(self):
        return [{"level": i, "n": l.n, "nnz": l.A.nnz} for i, l in enumerate(self.levels)]


# -- setup helpers ---------------------------------------------------------

def _tvset(A, V, prov):
    from .testvectors import TestVectorSet, weights_for
    keep = np.linalg.norm(V, axis=0) > 0
    V = V[:, keep] / np.linalg.norm(V[:, keep], axis=0)
    prov = [p for p, k in zip(prov, keep) if k]
    return TestVectorSet(V, weights_for(A, V), prov)


def _relax_shifted(A, T, V, lam, sweeps):
    """Gauss-Seidel on ``(A - lam_q T) v_q = 0`` for each column, in place."""
    As, Ts = A.to_scipy(), T.to_scipy()
    for q in range(V.shape[1]):
        B = (As - lam[q] * Ts).tocsr()
        B.sort_indices()
        d = B.diagonal()
        if np.any(d <= 0.0):
            # shift past the diagonal; plain relaxation still smooths
            B, d = As, A.diagonal()
        col = np.ascontiguousarray(V[:, q])
        zero = np.zeros(col.size)
        for _ in range(sweeps):
            _kernels.gs_sweep(B.indptr.astype(np.int64), B.indices.astype(np.int64),
                              B.data, np.ascontiguousarray(d), col, zero, True)
        V[:, q] = col


def _rayleigh(A, T, V):
    AV = A.to_scipy() @ V
    TV = T.to_scipy() @ V
    return np.einsum("iq,iq->q", AV, V) / np.einsum("iq,iq->q", TV, V)


def coarsest_eigenpairs(A, T, k):
    """``k`` smallest pairs of ``A v = lam T v`` by a dense solve."""
    k = min(k, A.n_rows)
    try:
        lam, V = sla.eigh(A.toarray(), T.toarray(), subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"coarsest eigenproblem: T is not positive definite ({exc})") from None
    return lam, V


class _Builder:
    """Bootstrap setup state: per-level operators plus relaxed and eigen sets."""

    def __init__(self, A, p):
        from .testvectors import generate_relaxed
        self.p = p
        self.levels = [Level(A, SparseMatrix.identity(A.n_rows))]
        tv0 = generate_relaxed(A, p.k_r, p.mu1 + p.mu2, p.seed, key=(0,))
        self.Vr = [tv0.vectors.copy()]
        self.prov_r = list(tv0.provenance)
        self.Ve = [None]
        self.lam = None
        self.truncated = False

    def _tvs(self, l):
        V, prov = self.Vr[l], self.prov_r
        if self.Ve[l] is not None:
            from .testvectors import EIGEN
            V = np.hstack([V, self.Ve[l]])
            prov = prov + [EIGEN] * self.Ve[l].shape[1]
        return _tvset(self.levels[l].A, V, prov)

    def _relax(self, l, sweeps):
        from .sparse import relax_block
        lvl = self.levels[l]
        relax_block(lvl.A, self.Vr[l], sweeps)
        if self.Ve[l] is not None:
            _relax_shifted(lvl.A, lvl.T, self.Ve[l], self.lam, sweeps)

    def rebuild(self, l, key):
        """Coarsen level ``l`` and form level ``l + 1``; False if no coarsening possible."""
        from .coarsening import CRParams, coarsen
        from .interpolation import interpolate_promoting
        p = self.p
        lvl = self.levels[l]
        tvs = self._tvs(l)
        res = coarsen(lvl.A, tvs, CRParams(p.delta, p.nu, p.d, p.theta_ad, p.seed), key=key)
        nc = res.partition.n_coarse
        if nc == 0 or nc == lvl.n:
            return False
        # unreachable F-points become C-points on this level
        interp, res.partition = interpolate_promoting(lvl.A, tvs, res.partition, p.c,
                                                      p.d_ls, p.gamma)
        nc = res.partition.n_coarse
        lvl.interp, lvl.coarsening = interp, res
        P = interp.P
        Ac = galerkin(lvl.A, P)
        Tc = galerkin(lvl.T, P)
        C = res.partition.C
        del self.levels[l + 1:]
        del self.Vr[l + 1:], self.Ve[l + 1:]
        self.levels.append(Level(Ac, Tc))
        self.Vr.append(np.ascontiguousarray(self.Vr[l][C]))
        self.Ve.append(None if self.Ve[l] is None else np.ascontiguousarray(self.Ve[l][C]))
        log.info("level %d: n=%d -> %d (nnz %d)", l, lvl.n, nc, Ac.nnz)
        return True

    def is_coarsest(self, l):
        if self.levels[l].n <= self.p.coarse_size:
            return True
        if l + 1 >= self.p.max_levels:
            if not self.truncated:
                warnings.warn(f"hierarchy truncated at {self.p.max_levels} levels with "
                              f"{self.levels[l].n} unknowns on the coarsest", stacklevel=3)
                self.truncated = True
            return True
        return False

    def solve_coarsest(self, l):
        lvl = self.levels[l]
        lam, V = coarsest_eigenpairs(lvl.A, lvl.T, self.p.k_e)
        self.lam = lam
        self.Ve[l] = np.ascontiguousarray(V)

    def prolong_eigen(self, l):
        """Interpolate the eigen-set from ``l + 1``, relax, refresh the quotients."""
        lvl = self.levels[l]
        self.Ve[l] = np.ascontiguousarray(lvl.interp.P.to_scipy() @ self.Ve[l + 1])
        _relax_shifted(lvl.A, lvl.T, self.Ve[l], self.lam, self.p.mu2)
        self.lam = _rayleigh(lvl.A, lvl.T, self.Ve[l])

    def build_down(self, l0, key, relax=True):
        """Top-down rebuild from level ``l0`` to the coarsest."""
        l = l0
        while not self.is_coarsest(l):
            if relax and l > l0:
                self._relax(l, self.p.mu1)
            if not self.rebuild(l, key + (l,)):
                break
            l += 1
        del self.levels[l + 1:]
        self.levels[l].interp = None
        return l

    def cycle(self, l, key):
        """Recursive W-shaped setup cycle below level ``l``."""
        if l > 0:
            self._relax(l, self.p.mu1)
        if self.is_coarsest(l) or not self.rebuild(l, key + (l,)):
            del self.levels[l + 1:]
            self.levels[l].interp = None
            self.solve_coarsest(l)
            return
        visits = 1 if self.is_coarsest(l + 1) else 2
        for v in range(visits):
            self.cycle(l + 1, key + (v,))
        self.prolong_eigen(l)


def bootstrap_setup(A, params=None):
    """Multilevel bootstrap setup.

    An initial top-down pass builds the hierarchy from relaxed random vectors
    only. Each bootstrap cycle then solves the coarsest generalized
    eigenproblem ``A v = lam T v``, carries the eigenvectors up through
    ``P`` with relaxation and Rayleigh-quotient updates, and rebuilds the
    levels from the relaxed set joined with the eigen set. A final top-down
    pass builds the operators the solver uses.
    """
    p = params or SetupParams()
    if not isinstance(A, SparseMatrix):
        from .problems import assemble
        A = assemble(A)
    b = _Builder(A, p)
    if A.n_rows <= p.coarse_size or p.max_levels == 1:
        h = Hierarchy(b.levels, p)
        h.meta["note"] = "single level: direct solve"
        return h
    last = b.build_down(0, (0,))
    if p.k_e > 0 and p.cycles > 0:
        b.solve_coarsest(last)
        for l in range(last - 1, -1, -1):
            b.prolong_eigen(l)
        for cyc in range(p.cycles):
            b._relax(0, p.mu1)
            b.cycle(0, (1, cyc))
        b._relax(0, p.mu1)
        b.build_down(0, (2,))
    h = Hierarchy(b.levels, p)
    if b.Ve[0] is not None:
        h.eigenvectors = b.Ve[0]
        h.eigenvalues = b.lam
    k = p.k_r + (p.k_e if b.Ve[0] is not None else 0)
    _, go = h.complexity()
    h.work_units = (p.mu1 + p.mu2) * go * k
    h.meta["work_unit_note"] = "(mu1+mu2) * gamma_o * k per setup cycle, k counting both sets"
    return h


# -- AMLI preconditioned flexible CG ---------------------------------------------

class AMLICycle:
    """Nonlinear AMLI W-cycle.

    On every level but the coarsest: forward Gauss-Seidel pre-smoothing,
    a coarse correction from ``inner`` flexible-CG steps on the next level
    preconditioned by this same cycle one level down, backward
    Gauss-Seidel post-smoothing. The coarsest level is solved directly.
    """

    def __init__(self, hierarchy, pre=2, post=2, inner=2):
        self.h = hierarchy
        self.pre, self.post, self.inner = pre, post, inner
        L = hierarchy.n_levels - 1
        self.smoothers = [_Smoother(l.A) for l in hierarchy.levels[:L]]
        self.coarse = _DirectSolver(hierarchy.levels[L].A)
        self.P = [l.interp.P.to_scipy() for l in hierarchy.levels[:L]]
        self.calls = 0

    def apply(self, r, l=0):
        self.calls += 1
        if l == self.h.n_levels - 1:
            return self.coarse(r)
        A = self.h.levels[l].A
        sm = self.smoothers[l]
        x = np.zeros_like(r)
        for _ in range(self.pre):
            sm.sweep(x, r, True)
        res = r - spmv(A, x)
        rc = self.P[l].T @ res
        if l + 1 == self.h.n_levels - 1:
            ec = self.coarse(rc)
        else:
            Ac = self.h.levels[l + 1].A
            ec, _ = _fcg(Ac, rc, lambda v: self.apply(v, l + 1), tol=0.0,
                         max_iter=self.inner, raise_on_max=False)
        x += self.P[l] @ ec
        for _ in range(self.post):
            sm.sweep(x, r, False)
        return x


def _fcg(A, b, prec, tol=1e-8, max_iter=100, x0=None, raise_on_max=True):
    """Flexible CG with one-step orthogonalisation.

    A rise in the residual norm restarts the recurrence from the current
    iterate. Returns ``(x, info)``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - spmv(A, x) if x0 is not None else b.copy()
    nb = np.linalg.norm(b)
    res = [float(np.linalg.norm(r))]
    info = {"iterations": 0, "residuals": res, "restarts": 0, "converged": nb == 0.0}
    if nb == 0.0:
        return x, info
    p_old = q_old = None
    pq_old = 0.0
    for it in range(1, max_iter + 1):
        z = prec(r)
        p = z
        if p_old is not None:
            p = z - (np.dot(z, q_old) / pq_old) * p_old
        q = spmv(A, p)
        pq = float(np.dot(p, q))
        if pq <= 0.0:
            raise DivergenceError(f"FCG lost positive definiteness (p^T A p = {pq:.3e})")
        alpha = float(np.dot(p, r)) / pq
        x += alpha * p
        r -= alpha * q
        nr = float(np.linalg.norm(r))
        res.append(nr)
        info["iterations"] = it
        if nr > res[-2]:
            info["restarts"] += 1
            p_old = q_old = None
        else:
            p_old, q_old, pq_old = p, q, pq
        if nr <= tol * nb:
            info["converged"] = True
            return x, info
    if raise_on_max and tol > 0.0:
        raise MaxIterationsError(
            f"FCG reached {max_iter} iterations, relative residual {res[-1] / nb:.3e}",
            res[-1] / nb)
    return x, info


def amli_fcg_solve(hierarchy, b, tol=1e-8, max_iter=100, x0=None):
    """Solve ``A_0 x = b`` by FCG preconditioned with one AMLI W-cycle per step."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    A = hierarchy.levels[0].A
    if hierarchy.n_levels == 1:
        solver = _DirectSolver(A)
        prec = solver
    else:
        prec = AMLICycle(hierarchy).apply
    x, info = _fcg(A, b, prec, tol=tol, max_iter=max_iter, x0=x0)
    gg, go = hierarchy.complexity()
    rep = SolveReport(
        rho=float((info["residuals"][-1] / info["residuals"][0]) ** (1.0 / max(info["iterations"], 1))),
        gamma_g=gg, gamma_o=go, coarse_fraction=(hierarchy.levels[1].n / A.n_rows
                                                 if hierarchy.n_levels > 1 else 1.0),
        iterations=info["iterations"], work_units=hierarchy.work_units,
        residuals=info["residuals"], restarts=info["restarts"],
        meta={"levels": hierarchy.n_levels, **hierarchy.meta})
    return x, rep
