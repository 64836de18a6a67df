import numpy as np
import pytest
import scipy.sparse as sp

from bamg.coarsening import Partition
from bamg.problems import ProblemSpec, assemble
from bamg.sparse import SparseMatrix
from bamg.testvectors import TestVectorSet


def poisson1d(n):
    M = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    return SparseMatrix.from_scipy(M, symmetric=True)


def laplace2d(m):
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    return SparseMatrix.from_scipy(sp.kron(I, T) + sp.kron(T, I), symmetric=True)


def tvset(V, w=None):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    return TestVectorSet(V, np.ones(V.shape[1]) if w is None else np.asarray(w, float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fd_small():
    spec = ProblemSpec(16, -np.pi / 4, 0.1, "FD7")
    return spec, assemble(spec)


def every_kth(n, k, start=0):
    return Partition(n, np.arange(start, n, k))
