"""Relaxed test vectors and their least-squares weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .sparse import relax_block, spmv

RELAXED = "relaxed-random"
CONSTANT = "constant"
EIGEN = "bootstrapped-eigen"

# stream id for test-vector draws
_TV_STREAM = 1


class DegenerateTestVectors(ValueError):
    pass


@dataclass
class TestVectorSet:
    """``k`` test vectors stored column-wise in an ``(n, k)`` block."""

    __test__ = False  # not a pytest class

    vectors: np.ndarray
    weights: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 1:
            raise ValueError("need at least one test vector")
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.k,):
            raise ValueError("one weight per test vector")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(~self.vectors.any(axis=0)):
            raise ValueError("identically zero test vector")
        if not self.provenance:
            self.provenance = [RELAXED] * self.k

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def k(self):
        return self.vectors.shape[1]

    def restrict(self, rows):
        """Injection onto a subset of rows (e.g. the C-points)."""
        V = self.vectors[rows]
        keep = V.any(axis=0)
        return TestVectorSet(V[:, keep], self.weights[keep],
                             [p for p, kp in zip(self.provenance, keep) if kp])

    def export_text(self, path):
        np.savetxt(path, self.vectors, fmt="%.17g")


def rayleigh_quotients(A, V):
    AV = np.column_stack([spmv(A, V[:, q]) for q in range(V.shape[1])])
    return np.einsum("iq,iq->q", AV, V) / np.einsum("iq,iq->q", V, V)


def weights_for(A, V, spd=True):
    """``<v, v> / <A v, v>`` per column."""
    AV = np.column_stack([spmv(A, V[:, q]) for q in range(V.shape[1])])
    energy = np.einsum("iq,iq->q", AV, V)
    if np.any(energy == 0.0) or (spd and np.any(energy < 0.0)):
        bad = int(np.flatnonzero(energy <= 0.0)[0])
        raise ValueError(f"<Av, v> = {energy[bad]:.3e} <= 0 for test vector {bad}")
    return np.einsum("iq,iq->q", V, V) / energy


def compute_weights(A, tvs):
    tvs.weights = weights_for(A, tvs.vectors, spd=A.symmetric)
    return tvs.weights


def random_block(n, k, seed, *key):
    return _rng.uniform_centered(_rng.stream(seed, _TV_STREAM, *key), (n, k))


def generate_relaxed(A, k=8, sweeps=40, seed=0, key=()):
    """Constant vector plus ``k - 1`` relaxed random vectors, unit 2-norm.

    The random starts get ``sweeps`` forward Gauss-Seidel sweeps on ``A v = 0``;
    the constant vector is left as is.
    """
    if k < 2:
        raise ValueError("k must be >= 2 (the constant vector is always included)")
    n = A.n_rows
    V = np.empty((n, k))
    V[:, 0] = 1.0
    V[:, 1:] = random_block(n, k - 1, seed, *key)
    R = np.ascontiguousarray(V[:, 1:])
    relax_block(A, R, sweeps)
    V[:, 1:] = R
    norms = np.linalg.norm(V, axis=0)
    scale = max(norms[1:].max(), 1e-300) if k > 1 else 1.0
    dead = norms <= 1e-12 * np.sqrt(n) * scale
    dead[0] = False
    if np.all(dead[1:]):
        raise DegenerateTestVectors("insufficient nonzero test vectors: "
                                    f"all {k - 1} relaxed vectors vanished")
    keep = ~dead
    V = V[:, keep] / norms[keep]
    prov = [CONSTANT] + [RELAXED] * (int(keep.sum()) - 1)
    tvs = TestVectorSet(V, np.ones(V.shape[1]), prov)
    compute_weights(A, tvs)
    return tvs
