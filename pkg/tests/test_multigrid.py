import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from bamg.coarsening import Partition
from bamg.interpolation import build_interpolation
from bamg.multigrid import (AMLICycle, DivergenceError, Hierarchy, Level, MaxIterationsError,
                            SetupParams, _DirectSolver, _fcg, _Smoother, a_norm,
                            amli_fcg_solve, bootstrap_setup, coarsest_eigenpairs, galerkin,
                            two_grid_cycle, two_grid_solve_rate)
from bamg.problems import ProblemSpec, assemble
from bamg.sparse import SparseMatrix
from bamg.testvectors import generate_relaxed

from conftest import laplace2d, poisson1d


def test_galerkin_identity_and_ones():
    A = laplace2d(4)
    assert np.array_equal(galerkin(A, SparseMatrix.identity(16)).toarray(), A.toarray())
    ones = SparseMatrix.from_dense(np.ones((16, 1)))
    assert galerkin(A, ones).toarray()[0, 0] == pytest.approx(A.toarray().sum())


def test_galerkin_dense_oracle(rng):
    M = rng.standard_normal((10, 10))
    A = SparseMatrix.from_dense(M @ M.T + 10 * np.eye(10), symmetric=True)
    P = rng.standard_normal((10, 4))
    Ac = galerkin(A, SparseMatrix.from_dense(P)).toarray()
    ref = P.T @ A.toarray() @ P
    assert np.abs(Ac - ref).max() <= 1e-12 * np.abs(ref).max()
    np.linalg.cholesky(Ac)


def test_galerkin_dimension_mismatch():
    with pytest.raises(ValueError):
        galerkin(laplace2d(3), SparseMatrix.identity(4))


def _two_grid_parts(spec, c=2, seed=0):
    from bamg.coarsening import CRParams, coarsen
    A = assemble(spec)
    tvs = generate_relaxed(A, 8, 40, seed)
    part = coarsen(A, tvs, CRParams(seed=seed)).partition
    return A, build_interpolation(A, tvs, part, c, 4).P


def test_exact_coarse_space_gives_zero_rate():
    A = poisson1d(6)
    P = SparseMatrix.identity(6)
    rep = two_grid_solve_rate(A, P, eta=5)
    assert rep.rho <= 1e-14


def test_coarse_correction_does_not_raise_energy(rng):
    A, P = _two_grid_parts(ProblemSpec(16, 0.3, 0.01, "FD7"))
    Ac = galerkin(A, P)
    sm, coarse = _Smoother(A), _DirectSolver(Ac)
    Ps = P.to_scipy()
    for _ in range(5):
        e = rng.standard_normal(A.n_rows)
        before = a_norm(A, e)
        # coarse correction alone: e - P Ac^{-1} P^T A e
        after = e - Ps @ coarse(Ps.T @ (A.to_scipy() @ e))
        assert a_norm(A, after) <= before * (1 + 1e-12)
    x = rng.standard_normal(A.n_rows)
    two_grid_cycle(A, P, sm, coarse, x, np.zeros(A.n_rows))


def test_two_grid_report_fields():
    spec = ProblemSpec(16, 0.0, 0.1, "FD7")
    A, P = _two_grid_parts(spec)
    rep = two_grid_solve_rate(A, P, seed=3)
    Ac = galerkin(A, P)
    assert 0 < rep.rho < 1
    assert rep.coarse_fraction == pytest.approx(Ac.n_rows / A.n_rows)
    assert rep.gamma_g == pytest.approx(1 + rep.coarse_fraction)
    assert rep.gamma_o == pytest.approx((A.nnz + Ac.nnz) / A.nnz)
    assert two_grid_solve_rate(A, P, seed=3).rho == rep.rho


def test_two_grid_divergence_detected():
    A = laplace2d(4)
    # an indefinite "coarse" operator turns the correction into an amplifier
    P = SparseMatrix.from_dense(np.ones((16, 1)) * 1e-4)
    with pytest.raises(DivergenceError):
        two_grid_solve_rate(A, P, pre_sweeps=0, post_sweeps=0, eta=50,
                            Ac=SparseMatrix.from_dense([[1e-20]]))


def test_aligned_two_grid_rate():
    spec = ProblemSpec(32, 0.0, 0.1, "FD7")
    A, P = _two_grid_parts(spec)
    rep = two_grid_solve_rate(A, P)
    assert rep.rho <= 0.20
    assert abs(rep.coarse_fraction - 0.33) <= 0.10, f"coarse fraction {rep.coarse_fraction:.3f}"
    assert abs(rep.gamma_o - 1.6) <= 0.40


def test_rotated_two_grid_rate():
    A, P = _two_grid_parts(ProblemSpec(32, -np.pi / 4, 0.0, "FD7"))
    assert two_grid_solve_rate(A, P).rho <= 0.50


# -- setup ----------------------------------------------------------------------

def test_setup_params_validation():
    with pytest.raises(ValueError):
        SetupParams(c=0)
    with pytest.raises(ValueError):
        SetupParams(coarse_size=10)
    assert SetupParams(d=3).d_ls == 5


def test_single_level_is_direct_solve():
    A = laplace2d(5)
    h = bootstrap_setup(A)
    assert h.n_levels == 1 and "single level" in h.meta["note"]
    b = np.arange(25.0)
    x, rep = amli_fcg_solve(h, b)
    assert rep.iterations == 1
    assert np.allclose(A.toarray() @ x, b)


def test_identity_converges_in_one_iteration():
    h = Hierarchy([Level(SparseMatrix.identity(7), SparseMatrix.identity(7))], SetupParams())
    x, rep = amli_fcg_solve(h, np.ones(7))
    assert rep.iterations == 1 and np.allclose(x, 1)


@pytest.fixture(scope="module")
def fd_hierarchy():
    spec = ProblemSpec(24, np.pi / 4, 1e-4, "FD7")
    A = assemble(spec)
    return A, bootstrap_setup(A, SetupParams(coarse_size=60, seed=1))


def test_hierarchy_structure(fd_hierarchy):
    A, h = fd_hierarchy
    assert h.n_levels >= 3
    assert h.levels[-1].interp is None
    for l, lvl in enumerate(h.levels[:-1]):
        nxt = h.levels[l + 1]
        P = lvl.interp.P
        assert P.shape == (lvl.n, nxt.n)
        assert np.allclose(galerkin(lvl.A, P).toarray(), nxt.A.toarray())
        if nxt.n <= 2000:
            np.linalg.cholesky(nxt.A.toarray())
    assert np.array_equal(h.levels[0].T.toarray(), np.eye(A.n_rows))


def test_t_is_the_composite_mass(fd_hierarchy, rng):
    _, h = fd_hierarchy
    Pc = sp.identity(h.levels[0].n, format="csr")
    for l in range(1, h.n_levels):
        Pc = Pc @ h.levels[l - 1].interp.P.to_scipy()
        x = rng.standard_normal(h.levels[l].n)
        T = h.levels[l].T.to_scipy()
        assert x @ (T @ x) == pytest.approx(np.linalg.norm(Pc @ x) ** 2, rel=1e-10)


def test_work_units(fd_hierarchy):
    _, h = fd_hierarchy
    p = h.params
    assert h.work_units == pytest.approx((p.mu1 + p.mu2) * h.complexity()[1] * (p.k_r + p.k_e))
    assert "work_unit_note" in h.meta


def test_eigen_approximations_near_true_spectrum():
    A = assemble(ProblemSpec(16, np.pi / 4, 1e-4, "FD7"))
    h = bootstrap_setup(A, SetupParams(coarse_size=50))
    lam = np.linalg.eigvalsh(A.toarray())[:8]
    rq = np.sort(h.eigenvalues)
    assert rq[0] >= lam[0] * (1 - 1e-10)
    assert np.all(rq <= 2 * lam)


def test_coarsest_eigenpairs_oracle(rng):
    M = rng.standard_normal((12, 12))
    A = SparseMatrix.from_dense(M @ M.T + np.eye(12), symmetric=True)
    T = SparseMatrix.from_dense(np.diag(rng.random(12) + 0.5), symmetric=True)
    lam, V = coarsest_eigenpairs(A, T, 3)
    import scipy.linalg as sla
    ref = sla.eigh(A.toarray(), T.toarray(), eigvals_only=True)[:3]
    assert np.allclose(lam, ref)


def test_coarsest_eigenpairs_needs_definite_t():
    A = SparseMatrix.identity(3)
    T = SparseMatrix.from_dense(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(np.linalg.LinAlgError, match="positive definite"):
        coarsest_eigenpairs(A, T, 2)


def test_truncation_warns():
    A = assemble(ProblemSpec(16, 0.0, 0.1, "FD7"))
    with pytest.warns(UserWarning, match="truncated"):
        h = bootstrap_setup(A, SetupParams(max_levels=2, coarse_size=16, cycles=1))
    assert h.n_levels == 2


def test_setup_deterministic():
    A = assemble(ProblemSpec(16, 0.5, 0.01, "FE9"))
    p = SetupParams(coarse_size=40, seed=4)
    h1, h2 = bootstrap_setup(A, p), bootstrap_setup(A, p)
    for a, b in zip(h1.levels, h2.levels):
        assert a.A.values.tobytes() == b.A.values.tobytes()


# -- solver ---------------------------------------------------------------------

def test_amli_solves_and_residuals_monotone(fd_hierarchy, rng):
    A, h = fd_hierarchy
    b = rng.standard_normal(A.n_rows)
    x, rep = amli_fcg_solve(h, b)
    assert np.linalg.norm(b - A.toarray() @ x) <= 1e-8 * np.linalg.norm(b)
    res = np.array(rep.residuals)
    rises = int(np.sum(res[1:] > res[:-1]))
    assert rises == rep.restarts
    assert rep.iterations <= 30


def test_amli_cycle_is_a_preconditioner(fd_hierarchy, rng):
    A, h = fd_hierarchy
    cyc = AMLICycle(h)
    r = rng.standard_normal(A.n_rows)
    z = cyc.apply(r)
    assert z @ r > 0
    assert cyc.calls > 1


def test_max_iterations_error(fd_hierarchy):
    A, h = fd_hierarchy
    with pytest.raises(MaxIterationsError) as err:
        amli_fcg_solve(h, np.ones(A.n_rows), tol=1e-14, max_iter=1)
    assert err.value.residual > 1e-14


def test_fcg_with_exact_preconditioner():
    A = laplace2d(5)
    solve = _DirectSolver(A)
    x, info = _fcg(A, np.ones(25), solve)
    assert info["iterations"] == 1 and info["converged"]


def test_fcg_rejects_indefinite():
    A = SparseMatrix.from_dense(np.diag([1.0, -1.0]))
    with pytest.raises(DivergenceError):
        _fcg(A, np.array([0.0, 1.0]), lambda r: r)


def test_rhs_must_be_finite(fd_hierarchy):
    A, h = fd_hierarchy
    b = np.ones(A.n_rows)
    b[0] = np.nan
    with pytest.raises(ValueError):
        amli_fcg_solve(h, b)


def test_fe_small_multilevel():
    from bamg.experiments import make_spec, run_multilevel
    run = run_multilevel(make_spec("FE9", 32, "0", 0.1))
    assert run.hierarchy.n_levels == 3
    assert run.record.report["iterations"] <= 8
