"""``bamg`` command line.

Subcommands: ``twogrid``, ``multilevel``, ``table``, ``figures``, ``stencil``.
Exit codes: 0 success, 1 numeric failure, 2 usage error. Files go to
``--out`` or, failing that, to ``$BAMG_OUT_DIR``; without either only
standard output is written.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import ML_LEVELS, TwoGridParams, make_spec, run_multilevel, run_twogrid
from .metrics import (CSV_HEADER, ExperimentRecord, coarse_stencil_report, dominant_offsets,
                      format_stencil, pick_center, render_record_svg,
                      stencil_asymmetry)
from .coarsening import CoarseningError
from .interpolation import InterpolationError
from .multigrid import DivergenceError, MaxIterationsError, SetupParams
from .sparse import write_matrix_market
from .testvectors import DegenerateTestVectors

OUT_ENV = "BAMG_OUT_DIR"
ALPHAS = ("0", "pi/4", "-pi/4", "pi/8")
EPSILONS = ("0.1", "1e-4", "0")
TABLES = {
    "fd-2grid": ("FD7", "twogrid"),
    "fe-2grid": ("FE9", "twogrid"),
    "fd-amli": ("FD7", "amli"),
    "fe-amli": ("FE9", "amli"),
}
FORMATS = ("json", "csv", "svg", "mm")
NUMERIC_ERRORS = (np.linalg.LinAlgError, DegenerateTestVectors, CoarseningError,
                  InterpolationError, DivergenceError, MaxIterationsError, ZeroDivisionError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _csv_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _problem_args(p, n=32, eps="1e-4"):
    p.add_argument("--scheme", type=str.upper, choices=("FD7", "FE9"), default="FD7")
    p.add_argument("--n", type=int, default=n, help="cells per side (h = 1/n)")
    p.add_argument("--alpha", default="0", help='anisotropy angle, e.g. "pi/8" or "-pi/4"')
    p.add_argument("--eps", default=eps, help="anisotropy ratio epsilon")


def _algo_args(p, tv_sweeps):
    p.add_argument("--caliber", type=int, default=2)
    p.add_argument("--depth", type=int, default=2, help="strength graph depth d")
    p.add_argument("--ls-depth", type=int, default=None, help="interpolation search depth (d+2)")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.7)
    p.add_argument("--nu", type=int, default=5)
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--tvs", type=int, default=8, help="number of relaxed test vectors")
    p.add_argument("--tv-sweeps", type=int, default=tv_sweeps)
    p.add_argument("--seed", type=int, default=0)


def _out_args(p):
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")
    p.add_argument("--format", default="json,csv",
                   help="comma list of " + ", ".join(FORMATS))


def build_parser():
    ap = _Parser(prog="bamg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    p = sub.add_parser("twogrid", help="two-grid rate of one problem")
    _problem_args(p)
    _algo_args(p, 40)
    _out_args(p)

    p = sub.add_parser("multilevel", help="bootstrap setup and AMLI-FCG solve")
    _problem_args(p, n=64)
    _algo_args(p, 8)
    p.add_argument("--levels", type=int, default=None, help="maximum number of levels")
    p.add_argument("--eigvecs", type=int, default=8)
    p.add_argument("--cycles", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    _out_args(p)

    p = sub.add_parser("table", help="sweep angles and epsilons for one table")
    p.add_argument("table_id", help=", ".join(TABLES))
    p.add_argument("--sizes", default="32", help="comma list of N")
    p.add_argument("--alphas", default=",".join(ALPHAS))
    p.add_argument("--eps", default=",".join(EPSILONS))
    p.add_argument("--jobs", type=int, default=1)
    _algo_args(p, None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("figures", help="coarse grid and interpolation pattern SVGs")
    p.add_argument("--scheme", type=str.upper, choices=("FD7", "FE9"), default="FD7")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--eps", default="1e-4")
    p.add_argument("--alphas", default=",".join(ALPHAS))
    p.add_argument("--depths", default="1,2")
    p.add_argument("--calibers", default="1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--from-record", default=None, help="redraw one SVG from a saved JSON record")
    p.add_argument("--out", default=None)

    p = sub.add_parser("stencil", help="coarse-operator stencil at a central C-point")
    _problem_args(p, eps="1e-10")
    _algo_args(p, 40)
    p.add_argument("--center", type=int, default=None, help="coarse index (default: nearest the middle)")
    p.add_argument("--out", default=None)
    return ap


# -- helpers ------------------------------------------------------------------

def _out_dir(args):
    d = args.out or os.environ.get(OUT_ENV)
    if not d:
        return None
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _formats(args):
    fm = _csv_list(args.format)
    bad = [f for f in fm if f not in FORMATS]
    if bad:
        raise UsageError(f"unknown format {bad[0]!r}; choose from {', '.join(FORMATS)}")
    return fm


def _twogrid_params(args):
    return TwoGridParams(c=args.caliber, d=args.depth, d_ls=args.ls_depth, theta_ad=args.theta,
                         delta=args.delta, nu=args.nu, gamma=args.gamma, k=args.tvs,
                         tv_sweeps=40 if args.tv_sweeps is None else args.tv_sweeps,
                         seed=args.seed)


def _setup_params(args, N):
    sweeps = 8 if args.tv_sweeps is None else args.tv_sweeps
    levels = getattr(args, "levels", None) or ML_LEVELS.get(N, 10)
    return SetupParams(c=args.caliber, d=args.depth, d_ls=args.ls_depth, gamma=args.gamma,
                       theta_ad=args.theta, delta=args.delta, nu=args.nu, k_r=args.tvs,
                       k_e=getattr(args, "eigvecs", 8), mu1=sweeps // 2,
                       mu2=sweeps - sweeps // 2, cycles=getattr(args, "cycles", 2),
                       max_levels=levels, seed=args.seed)


def _stem(rec):
    s = rec.spec
    alpha = str(s["alpha"]).replace("/", "_").replace("-", "m")
    return (f"{rec.kind}_{s['scheme'].lower()}_n{s['N']}_a{alpha}_e{s['epsilon']:g}"
            f"_c{rec.params['c']}_d{rec.params['d']}_s{rec.params['seed']}")


def _write_outputs(rec, out, formats, matrices=None):
    print(CSV_HEADER)
    print(rec.csv_line())
    if out is None:
        return
    stem = _stem(rec)
    if "json" in formats:
        rec.save(out / f"{stem}.json")
    if "csv" in formats:
        (out / f"{stem}.csv").write_text(CSV_HEADER + "\n" + rec.csv_line() + "\n")
    if "svg" in formats and rec.figure is not None:
        render_record_svg(rec, out / f"{stem}.svg")
    if "mm" in formats and matrices:
        for name, M in matrices.items():
            write_matrix_market(M, out / f"{stem}_{name}.mtx")


# -- subcommands ----------------------------------------------------------------

def cmd_twogrid(args):
    fm = _formats(args)
    run = run_twogrid(make_spec(args.scheme, args.n, args.alpha, args.eps), _twogrid_params(args))
    r = run.record.report
    print(f"# rho={r['rho']:.4f} coarse_fraction={r['coarse_fraction']:.3f} "
          f"gamma_g={r['gamma_g']:.3f} gamma_o={r['gamma_o']:.3f} rho_f={r['rho_f']:.3f}",
          file=sys.stderr)
    _write_outputs(run.record, _out_dir(args), fm,
                   {"A": run.A, "P": run.interpolation.P, "Ac": run.Ac})
    return 0


def cmd_multilevel(args):
    fm = _formats(args)
    spec = make_spec(args.scheme, args.n, args.alpha, args.eps)
    run = run_multilevel(spec, _setup_params(args, spec.N), tol=args.tol, max_iter=args.max_iter)
    r = run.record.report
    print(f"# iterations={r['iterations']} levels={r['levels']} gamma_g={r['gamma_g']:.3f} "
          f"gamma_o={r['gamma_o']:.3f} work_units={r['work_units']:.1f}", file=sys.stderr)
    _write_outputs(run.record, _out_dir(args), fm, {"A": run.hierarchy.levels[0].A})
    return 0


def _cell(job):
    kind, scheme, N, alpha, eps, args = job
    spec = make_spec(scheme, N, alpha, eps)
    try:
        if kind == "twogrid":
            return run_twogrid(spec, _twogrid_params(args)).record
        return run_multilevel(spec, _setup_params(args, N)).record
    except Exception as exc:  # recorded per cell, the sweep goes on
        p = (vars(_twogrid_params(args)) if kind == "twogrid" else vars(_setup_params(args, N)))
        return ExperimentRecord(kind=kind, spec=spec.to_dict(), params=dict(p), report={},
                                error=f"{type(exc).__name__}: {exc}")


def _cell_text(rec):
    if rec.error:
        return "error"
    r = rec.report
    if rec.kind == "twogrid":
        return f"{r['rho']:.2f} ({r['coarse_fraction']:.2f},{r['gamma_o']:.1f})"
    return f"{r['iterations']} ({r['gamma_g']:.1f},{r['gamma_o']:.1f})"


def render_table(records, alphas, epss, sizes):
    """Text table: one block per epsilon, rows alpha, columns N."""
    lines = []
    cells = {(r.spec["alpha"], float(r.spec["epsilon"]), r.spec["N"]): r for r in records}
    for e in epss:
        lines.append(f"epsilon = {e}")
        lines.append("alpha".ljust(8) + "".join(f"N={n}".ljust(20) for n in sizes))
        for a in alphas:
            row = a.ljust(8)
            for n in sizes:
                rec = cells.get((a, float(e), n))
                row += (_cell_text(rec) if rec else "-").ljust(20)
            lines.append(row.rstrip())
        lines.append("")
    return "\n".join(lines)


def cmd_table(args):
    if args.table_id not in TABLES:
        raise UsageError(f"unknown table {args.table_id!r}; choose from {', '.join(TABLES)}")
    scheme, kind = TABLES[args.table_id]
    sizes = [int(s) for s in _csv_list(args.sizes)]
    alphas, epss = _csv_list(args.alphas), _csv_list(args.eps)
    jobs = [(kind, scheme, N, a, e, args) for e in epss for a in alphas for N in sizes]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            records = list(ex.map(_cell, jobs))
    else:
        records = [_cell(j) for j in jobs]
    lines = [CSV_HEADER + ",error"]
    for rec in records:
        err = rec.error or ""
        line = rec.csv_line() if not rec.error else ",".join(
            [rec.spec["scheme"], str(rec.spec["N"]), str(rec.spec["alpha"]),
             str(rec.spec["epsilon"]), str(rec.params.get("c", "")),
             str(rec.params.get("d", "")), "", "", "", "", "", str(rec.params.get("seed", ""))])
        lines.append(line + "," + err.replace(",", ";").replace("\n", " "))
    csv_text = "\n".join(lines) + "\n"
    text = render_table(records, alphas, epss, sizes)
    print(csv_text, end="")
    print(text, file=sys.stderr)
    out = _out_dir(args)
    if out is not None:
        (out / f"{args.table_id}.csv").write_text(csv_text)
        (out / f"{args.table_id}.txt").write_text(text + "\n")
        with open(out / f"{args.table_id}.jsonl", "w") as fh:
            for rec in records:
                fh.write(rec.to_json() + "\n")
    return 1 if any(r.error for r in records) else 0


def cmd_figures(args):
    out = _out_dir(args) or Path(".")
    if args.from_record:
        rec = ExperimentRecord.load(args.from_record)
        path = out / (Path(args.from_record).stem + ".svg")
        render_record_svg(rec, path)
        print(path)
        return 0
    if args.n > 64:
        raise UsageError("figures are limited to n <= 64")
    for a in _csv_list(args.alphas):
        for d in (int(x) for x in _csv_list(args.depths)):
            for c in (int(x) for x in _csv_list(args.calibers)):
                spec = make_spec(args.scheme, args.n, a, args.eps)
                rec = run_twogrid(spec, TwoGridParams(c=c, d=d, seed=args.seed)).record
                stem = _stem(rec)
                rec.save(out / f"{stem}.json")
                render_record_svg(rec, out / f"{stem}.svg")
                print(out / f"{stem}.svg")
    return 0


def cmd_stencil(args):
    spec = make_spec(args.scheme, args.n, args.alpha, args.eps)
    run = run_twogrid(spec, _twogrid_params(args))
    part = run.coarsening.partition
    center = pick_center(part, spec) if args.center is None else args.center
    rep = coarse_stencil_report(run.Ac, part, spec, center)
    rep["dominant"] = dominant_offsets(rep)
    rep["asymmetry"] = stencil_asymmetry(rep)
    rep["spec"] = spec.to_dict()
    print(format_stencil(rep))
    if rep["boundary"]:
        print("# warning: centre is close to the boundary", file=sys.stderr)
    if rep["asymmetry"] > 0.05:
        print(f"# warning: stencil asymmetry {rep['asymmetry']:.2f} (irregular coarsening)",
              file=sys.stderr)
    out = _out_dir(args)
    if out is not None:
        (out / f"stencil_{_stem(run.record)}.json").write_text(json.dumps(rep, indent=1) + "\n")
    return 0


COMMANDS = {"twogrid": cmd_twogrid, "multilevel": cmd_multilevel, "table": cmd_table,
            "figures": cmd_figures, "stencil": cmd_stencil}


_VALUE_FLAGS = ("--alpha", "--alphas", "--eps")


def _glue_negative_values(argv):
    """``--alpha -pi/4`` -> ``--alpha=-pi/4``; argparse would read ``-pi/4`` as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and not nxt.startswith("--"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
        else:
            out.append(tok)
    return out


def main(argv=None):
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = ap.parse_args(_glue_negative_values(argv))
        if args.cmd is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except ValueError as exc:
        # remaining value errors come from parameter preconditions
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "trace": traceback.format_exc(limit=3)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
