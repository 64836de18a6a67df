import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bamg.coarsening import CRParams, Partition, coarsen
from bamg.interpolation import (DegenerateSetError, InterpolationError, build_interpolation,
                                choose_cardinality, ls_fit, prefer_larger, select_row,
                                select_row_reference)
from bamg.metrics import aligned_fraction
from bamg.problems import ProblemSpec, assemble
from bamg.sparse import SparseMatrix, graph_power
from bamg.strength import algebraic_distance, jacobi_smoothed
from bamg.testvectors import TestVectorSet, generate_relaxed

from conftest import laplace2d, poisson1d


def lattice_min(t, V, w, lo=-2.0, hi=2.0):
    """Brute-force LS minimum of two coefficients: coarse lattice, then a 1e-3 lattice."""
    def scan(ax, ay):
        X, Y = np.meshgrid(ax, ay, indexing="ij")
        r = t[None, None, :] - X[..., None] * V[:, 0] - Y[..., None] * V[:, 1]
        f = np.einsum("abk,k->ab", r * r, w)
        a, b = np.unravel_index(np.argmin(f), f.shape)
        return f[a, b], ax[a], ay[b]
    _, x, y = scan(np.arange(lo, hi, 1e-2), np.arange(lo, hi, 1e-2))
    return scan(np.arange(x - 0.02, x + 0.02, 1e-3), np.arange(y - 0.02, y + 0.02, 1e-3))


def test_ls_fit_singleton_matches_distance():
    A = laplace2d(6)
    tvs = generate_relaxed(A, 6, 10, seed=1)
    for i, j in [(14, 15), (14, 20), (0, 1)]:
        _, ls = ls_fit(tvs, A, i, [j])
        assert ls == pytest.approx(1 / algebraic_distance(A, tvs, i, j), rel=1e-12)


def test_ls_fit_exact_reproduction():
    r = np.random.default_rng(0)
    V = r.standard_normal((6, 4))
    Vt = V.copy()
    Vt[0] = 0.3 * V[2] - 1.2 * V[5]
    tvs = TestVectorSet(V, np.ones(4))
    p, ls = ls_fit(tvs, None, 0, [2, 5], Vt=Vt)
    assert np.allclose(p, [0.3, -1.2]) and ls == pytest.approx(0, abs=1e-24)


@pytest.mark.parametrize("seed", range(5))
def test_ls_fit_against_lattice_search(seed):
    r = np.random.default_rng(seed)
    V = r.standard_normal((4, 3))
    w = r.random(3) + 0.5
    Vt = r.standard_normal((4, 3))
    Vt[0] = r.uniform(-1, 1) * V[1] + r.uniform(-1, 1) * V[2] + 0.1 * r.standard_normal(3)
    p, ls = ls_fit(TestVectorSet(V, w), None, 0, [1, 2], Vt=Vt)
    fmin, x, y = lattice_min(Vt[0], V[[1, 2]].T, w)
    assert abs(p[0] - x) <= 1e-3 and abs(p[1] - y) <= 1e-3
    assert ls <= fmin <= ls + 1e-4


def test_ls_fit_degenerate_set():
    V = np.ones((4, 3))
    with pytest.raises(DegenerateSetError):
        ls_fit(TestVectorSet(V, np.ones(3)), None, 0, [1, 2], Vt=V)
    with pytest.raises(ValueError):
        ls_fit(TestVectorSet(V, np.ones(3)), None, 0, [], Vt=V)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_ls_fit_optimality_and_bounds(seed, k):
    r = np.random.default_rng(seed)
    V = r.standard_normal((8, k))
    V /= np.linalg.norm(V, axis=0)
    w = r.random(k) + 0.1
    Vt = r.standard_normal((8, k)) * 0.3
    W = sorted(r.choice(np.arange(1, 8), min(3, k - 1), replace=False).tolist())
    p, ls = ls_fit(TestVectorSet(V, w), None, 0, W, Vt=Vt)
    res = Vt[0] - V[W].T @ p
    for j in W:
        assert abs(np.sum(w * res * V[j])) <= 1e-10
    assert 0.0 <= ls <= np.sum(w * Vt[0] ** 2) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ls_nesting(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(2, 7))
    V = r.standard_normal((7, k))
    w = r.random(k) + 0.1
    Vt = r.standard_normal((7, k))
    tvs = TestVectorSet(V, w)
    for size in (2, 3):
        for W2 in itertools.combinations(range(1, 7), size):
            if size > k:
                continue
            try:
                _, big = ls_fit(tvs, None, 0, W2, Vt=Vt)
            except DegenerateSetError:
                continue
            for W1 in itertools.combinations(W2, size - 1):
                _, small = ls_fit(tvs, None, 0, W1, Vt=Vt)
                assert big <= small + 1e-12


def test_penalty_arithmetic():
    assert not prefer_larger(0.01, 0.002, 1, 1.5)
    assert prefer_larger(0.01, 5e-4, 1, 1.5)
    assert choose_cardinality([0.01, 0.002], 1.5) == 1
    assert choose_cardinality([0.01, 5e-4], 1.5) == 2
    # two extra points need the square of the exponent
    assert choose_cardinality([0.1, np.inf, 0.1 ** 3.5], 1.5) == 3
    # above one the rule asks for a tenfold drop
    assert prefer_larger(2.0, 0.19, 1, 1.5) and not prefer_larger(2.0, 0.3, 1, 1.5)


def test_select_row_caliber_one_is_argmax_distance():
    A = laplace2d(7)
    tvs = generate_relaxed(A, 8, 20, seed=4)
    i = 24
    nbh = graph_power(A, 3).neighbors(i)
    Ci, p, ls = select_row(tvs, A, i, nbh, caliber=1)
    mu = {int(j): algebraic_distance(A, tvs, i, int(j)) for j in nbh}
    assert Ci.tolist() == [max(mu, key=mu.get)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.floats(1.0, 2.0))
def test_select_row_matches_reference(seed, c, gamma):
    spec = ProblemSpec(8, 0.7, 0.05, "FE9")
    A = assemble(spec)
    tvs = generate_relaxed(A, 6, 10, seed)
    r = np.random.default_rng(seed)
    i = int(r.integers(A.n_rows))
    nbh = r.choice(graph_power(A, 2).neighbors(i), 6, replace=False)
    Ci, p, ls = select_row(tvs, A, i, nbh, c, gamma)
    Cr, pr, lsr = select_row_reference(tvs, A, i, nbh, c, gamma)
    assert sorted(Ci.tolist()) == sorted(np.asarray(Cr).tolist())
    assert ls == pytest.approx(lsr, rel=1e-8, abs=1e-14)


def test_select_row_empty_neighbourhood():
    A = poisson1d(4)
    with pytest.raises(InterpolationError):
        select_row(generate_relaxed(A, 3, 2), A, 0, [], 1)


def test_two_point_hand_example():
    A = SparseMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]], symmetric=True)
    tvs = TestVectorSet(np.ones((2, 1)), np.ones(1))
    I = build_interpolation(A, tvs, Partition(2, [0]), caliber=1, d_ls=1)
    assert np.allclose(I.P.toarray(), [[1.0], [0.5]])


def test_piecewise_constant_from_constant_vector():
    # 1D chain, C every other point, each F-point next to exactly one C-point
    A = poisson1d(6)
    A = SparseMatrix.from_scipy(A.to_scipy() - np.diag([1.0, 0, 0, 0, 0, 1.0]), symmetric=True)
    tvs = TestVectorSet(np.ones((6, 1)), np.ones(1))
    part = Partition(6, [1, 4])
    I = build_interpolation(A, tvs, part, caliber=1, d_ls=1)
    P = I.P.toarray()
    assert np.allclose(P.sum(axis=1), 1.0)
    assert set(np.unique(P)) <= {0.0, 1.0}


def test_identity_on_coarse_rows():
    A = laplace2d(6)
    tvs = generate_relaxed(A, 6, 20)
    part = Partition(36, np.arange(0, 36, 3))
    I = build_interpolation(A, tvs, part, 2, 3)
    P = I.P.toarray()
    assert np.array_equal(P[part.C], np.eye(part.n_coarse))
    assert np.all((P[part.F] != 0).sum(axis=1) <= 2)


def test_unreachable_point_is_reported():
    A = poisson1d(9)
    tvs = generate_relaxed(A, 3, 5)
    with pytest.raises(InterpolationError) as err:
        build_interpolation(A, tvs, Partition(9, [0]), 1, 2)
    assert 8 in err.value.points.tolist()


def test_coarse_free_block_gets_zero_rows():
    import scipy.sparse as sp
    B = poisson1d(4).to_scipy()
    A = SparseMatrix.from_scipy(sp.block_diag([B, B]), symmetric=True)
    tvs = generate_relaxed(A, 4, 5)
    I = build_interpolation(A, tvs, Partition(8, [1]), 1, 2)
    assert np.all(I.P.toarray()[4:] == 0)


def test_grid_aligned_caliber_one_links_follow_x():
    spec = ProblemSpec(32, 0.0, 1e-4, "FD7")
    A = assemble(spec)
    tvs = generate_relaxed(A, 8, 40, 0)
    part = coarsen(A, tvs, CRParams(d=1)).partition
    I = build_interpolation(A, tvs, part, caliber=1, d_ls=3)
    assert aligned_fraction(I, spec, 0.0, tol_deg=1.0) >= 0.95


def test_dump(tmp_path):
    A = laplace2d(4)
    I = build_interpolation(A, generate_relaxed(A, 4, 5), Partition(16, [0, 5, 10, 15]), 2, 3)
    I.dump(tmp_path / "p.txt")
    assert len((tmp_path / "p.txt").read_text().splitlines()) == 13


def test_promotion_makes_unreachable_points_coarse():
    from bamg.interpolation import interpolate_promoting
    A = poisson1d(9)
    tvs = generate_relaxed(A, 3, 5)
    I, part = interpolate_promoting(A, tvs, Partition(9, [0]), 1, 2)
    assert 0 in part.C and part.n_coarse > 1
    assert I.P.shape == (9, part.n_coarse)
