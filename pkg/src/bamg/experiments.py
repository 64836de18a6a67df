"""End-to-end runs: problem -> setup -> solver -> ExperimentRecord."""
from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass

from . import _rng
from .coarsening import CRParams, coarsen
from .interpolation import interpolate_promoting
from .metrics import ExperimentRecord, figure_data, report_dict
from .multigrid import (_SOLVE_STREAM, SetupParams, amli_fcg_solve, bootstrap_setup,
                        galerkin, two_grid_solve_rate)
from .problems import ProblemSpec, assemble, parse_angle
from .testvectors import generate_relaxed

# levels used for the multilevel tables, by grid size
ML_LEVELS = {16: 2, 32: 3, 64: 4, 128: 5, 256: 6}


@dataclass
class TwoGridParams:
    c: int = 2
    d: int = 2
    d_ls: int | None = None
    theta_ad: float = 0.5
    delta: float = 0.7
    nu: int = 5
    gamma: float = 1.5
    k: int = 8
    tv_sweeps: int = 40
    pre: int = 2
    post: int = 2
    eta: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.d_ls is None:
            self.d_ls = self.d + 2


def make_spec(scheme, N, alpha, epsilon):
    text = str(alpha)
    return ProblemSpec(int(N), parse_angle(text), float(epsilon), scheme, alpha_text=text)


@dataclass
class TwoGridRun:
    record: ExperimentRecord
    A: object
    tvs: object
    coarsening: object
    interpolation: object
    Ac: object


def run_twogrid(spec, params=None):
    """Relaxed TVs, CR coarsening, LS interpolation, two-grid rate."""
    p = params or TwoGridParams()
    t0 = time.perf_counter()
    A = assemble(spec)
    tvs = generate_relaxed(A, p.k, p.tv_sweeps, p.seed)
    res = coarsen(A, tvs, CRParams(p.delta, p.nu, p.d, p.theta_ad, p.seed))
    interp, res.partition = interpolate_promoting(A, tvs, res.partition, p.c, p.d_ls, p.gamma)
    Ac = galerkin(A, interp.P)
    rep = two_grid_solve_rate(A, interp.P, p.pre, p.post, p.eta, p.seed, Ac=Ac)
    rec = ExperimentRecord(
        kind="twogrid", spec=spec.to_dict(), params=asdict(p),
        report=report_dict(rep, rho_f=float(res.rho_f),
                           cr_rounds=[asdict(r) for r in res.trace],
                           seconds=round(time.perf_counter() - t0, 3)),
        levels=[{"level": 0, "n": A.n_rows, "nnz": A.nnz},
                {"level": 1, "n": Ac.n_rows, "nnz": Ac.nnz}],
        figure=figure_data(res.partition, interp))
    # wall time is not part of the reproducible record
    rec.report.pop("seconds")
    return TwoGridRun(rec, A, tvs, res, interp, Ac)


@dataclass
class MultilevelRun:
    record: ExperimentRecord
    hierarchy: object
    x: object


def run_multilevel(spec, params=None, tol=1e-8, max_iter=100):
    """Bootstrap setup then AMLI-preconditioned FCG on a seeded random right-hand side."""
    p = params or SetupParams(max_levels=ML_LEVELS.get(spec.N, 10))
    A = assemble(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h = bootstrap_setup(A, p)
    b = _rng.uniform_centered(_rng.stream(p.seed, _SOLVE_STREAM, 1), A.n_rows)
    x, rep = amli_fcg_solve(h, b, tol=tol, max_iter=max_iter)
    lvl0 = h.levels[0]
    rho_f = float(lvl0.coarsening.rho_f) if lvl0.coarsening is not None else None
    rec = ExperimentRecord(
        kind="amli", spec=spec.to_dict(), params=asdict(p),
        report=report_dict(rep, rho_f=rho_f, levels=h.n_levels,
                           work_unit_note=h.meta.get("work_unit_note")),
        levels=h.describe(),
        figure=(figure_data(lvl0.coarsening.partition, lvl0.interp)
                if lvl0.interp is not None else None))
    return MultilevelRun(rec, h, x)
