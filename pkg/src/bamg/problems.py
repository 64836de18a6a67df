"""Rotated anisotropic diffusion on the unit square.

Two discretisations of ``-div(K grad u)`` on an ``(N+1) x (N+1)`` uniform grid
with homogeneous Dirichlet data: a seven-point finite difference scheme whose
cross term uses the lower-left/upper-right neighbours, and bilinear finite
elements (nine points). Unknowns are the ``(N-1)**2`` interior nodes numbered
lexicographically, x fastest.

Matrices carry the stencil without the ``1/h**2`` factor; every consumer is
scale invariant.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import SparseMatrix

SCHEMES = ("FD7", "FE9")


@dataclass(frozen=True)
class DiffusionCoefficients:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class ProblemSpec:
    N: int
    alpha: float
    epsilon: float
    scheme: str = "FD7"
    alpha_text: str | None = None

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"N must be >= 4, got {self.N}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        scheme = self.scheme.upper()
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def m(self):
        """Interior nodes per side."""
        return self.N - 1

    @property
    def n(self):
        return (self.N - 1) ** 2

    def coords(self, i):
        """Grid position ``(ix, iy)`` of unknown ``i`` (1-based grid indices)."""
        iy, ix = divmod(int(i), self.m)
        return ix + 1, iy + 1

    def to_dict(self):
        return {"scheme": self.scheme, "N": self.N,
                "alpha": self.alpha_text or repr(self.alpha),
                "epsilon": self.epsilon}


_ANGLE = re.compile(r"^\s*([+-])?\s*(\d*\.?\d*)?\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(text):
    """Parse ``"pi/8"``, ``"-pi/4"``, ``"3pi/4"``, ``"0"`` or a decimal into radians."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    m = _ANGLE.match(s)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        mult = float(m.group(2)) if m.group(2) else 1.0
        div = float(m.group(3)) if m.group(3) else 1.0
        return sign * mult * math.pi / div
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"cannot parse angle {text!r}") from None


def coefficients(alpha, epsilon):
    ca, sa = math.cos(alpha), math.sin(alpha)
    a = ca * ca + epsilon * sa * sa
    b = 0.5 * (1.0 - epsilon) * math.sin(2.0 * alpha)
    c = sa * sa + epsilon * ca * ca
    return DiffusionCoefficients(a, b, c)


def fd7_stencil(alpha, epsilon):
    """3x3 stencil, rows north to south, columns west to east."""
    k = coefficients(alpha, epsilon)
    a, b, c = k.a, k.b, k.c
    return np.array([
        [0.0, -c + b, -b],
        [-a + b, 2 * a + 2 * c - 2 * b, -a + b],
        [-b, -c + b, 0.0],
    ])


def fe9_stencil(alpha, epsilon):
    k = coefficients(alpha, epsilon)
    a, b, c = k.a, k.b, k.c
    return np.array([
        [-a + 3 * b - c, 2 * (a - 2 * c), -a - 3 * b - c],
        [2 * (-2 * a + c), 8 * (a + c), 2 * (-2 * a + c)],
        [-a - 3 * b - c, 2 * (a - 2 * c), -a + 3 * b - c],
    ])


def stencil_matrix(stencil, m):
    """Constant-stencil operator on an ``m x m`` interior grid, Dirichlet eliminated."""
    n = m * m
    # rounding residue of trig identities (e.g. sin(pi)) must not add pattern
    stencil = np.where(np.abs(stencil) <= 1e-14 * np.abs(stencil).max(), 0.0, stencil)
    rows, cols, vals = [], [], []
    iy, ix = np.divmod(np.arange(n), m)
    for r in range(3):
        dy = 1 - r
        for col in range(3):
            dx = col - 1
            w = stencil[r, col]
            if w == 0.0:
                continue
            jx, jy = ix + dx, iy + dy
            ok = (jx >= 0) & (jx < m) & (jy >= 0) & (jy < m)
            rows.append(np.flatnonzero(ok))
            cols.append((jy * m + jx)[ok])
            vals.append(np.full(int(ok.sum()), w))
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    M.eliminate_zeros()
    return SparseMatrix.from_scipy(M, symmetric=True)


def assemble_fd7(spec):
    if spec.scheme != "FD7":
        raise ValueError("assemble_fd7 needs scheme FD7")
    return stencil_matrix(fd7_stencil(spec.alpha, spec.epsilon), spec.m)


def assemble_fe9(spec):
    if spec.scheme != "FE9":
        raise ValueError("assemble_fe9 needs scheme FE9")
    return stencil_matrix(fe9_stencil(spec.alpha, spec.epsilon), spec.m)


def assemble(spec):
    return assemble_fd7(spec) if spec.scheme == "FD7" else assemble_fe9(spec)
