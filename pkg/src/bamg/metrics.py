"""Complexities, experiment records, coarse-grid figures and coarse stencils."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .problems import ProblemSpec, parse_angle

CSV_HEADER = "scheme,N,alpha,epsilon,c,d,rho,rho_f,gamma_g,gamma_o,iters,seed"
NEGLIGIBLE = 1e-11


def complexity(hierarchy):
    """``(gamma_g, gamma_o)`` of a hierarchy or of a list of ``(n, nnz)`` pairs.

    Both ratios count the finest level, so a single level gives ``(1, 1)``.
    """
    if hasattr(hierarchy, "levels"):
        sizes = [(l.n, l.A.nnz) for l in hierarchy.levels]
    else:
        sizes = [(int(n), int(z)) for n, z in hierarchy]
    if not sizes:
        raise ValueError("empty hierarchy")
    n0, z0 = sizes[0]
    return (sum(n for n, _ in sizes) / n0, sum(z for _, z in sizes) / z0)


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return format(x, ".10g")


@dataclass
class ExperimentRecord:
    """Everything needed to re-run one experiment and to redraw its figure.

    ``figure`` holds the C-points and the interpolation rows ``[i, [j...]]``
    of the finest level; the SVG is rendered from it alone.
    """

    kind: str                    # "twogrid" or "amli"
    spec: dict                   # ProblemSpec.to_dict()
    params: dict
    report: dict
    levels: list = field(default_factory=list)
    figure: dict | None = None
    error: str | None = None

    def problem(self):
        s = self.spec
        return ProblemSpec(int(s["N"]), parse_angle(s["alpha"]), float(s["epsilon"]),
                           s["scheme"], alpha_text=str(s["alpha"]))

    # serialisation ---------------------------------------------------------
    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def csv_line(self):
        r, p, s = self.report, self.params, self.spec
        return ",".join([
            s["scheme"], str(s["N"]), str(s["alpha"]), _num(s["epsilon"]),
            str(p.get("c", "")), str(p.get("d", "")),
            _num(r.get("rho")), _num(r.get("rho_f")), _num(r.get("gamma_g")),
            _num(r.get("gamma_o")), _num(r.get("iterations")), str(p.get("seed", "")),
        ])


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def report_dict(report, **extra):
    """Plain-dict view of a SolveReport, residual history included."""
    d = {
        "rho": float(report.rho),
        "gamma_g": float(report.gamma_g),
        "gamma_o": float(report.gamma_o),
        "coarse_fraction": float(report.coarse_fraction),
        "iterations": report.iterations,
        "work_units": float(report.work_units),
        "restarts": report.restarts,
    }
    if report.residuals:
        d["residuals"] = [float(x) for x in report.residuals]
    d.update(extra)
    return d


def figure_data(partition, interpolation):
    rows = []
    if interpolation is not None:
        rows = [[i, Ci] for i, Ci, _, _ in interpolation.rows()]
    return {"C": [int(c) for c in partition.C], "rows": rows}


# -- SVG -------------------------------------------------------------------

_CELL = 12
_MARGIN = 10


def _xy(i, m):
    iy, ix = divmod(int(i), m)
    # y grows upward on the grid, downward in SVG
    return _MARGIN + ix * _CELL, _MARGIN + (m - 1 - iy) * _CELL


def svg_from_figure(figure, m):
    """SVG text for a figure record on an ``m x m`` interior grid."""
    is_c = np.zeros(m * m, dtype=bool)
    is_c[np.asarray(figure["C"], dtype=np.int64)] = True
    size = 2 * _MARGIN + (m - 1) * _CELL
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">',
        '<g stroke="black" stroke-width="1">',
    ]
    for i, Ci in figure["rows"]:
        x0, y0 = _xy(i, m)
        for j in Ci:
            x1, y1 = _xy(j, m)
            out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}"/>')
    out.append("</g>")
    out.append('<g stroke="black" stroke-width="0.8">')
    for i in range(m * m):
        x, y = _xy(i, m)
        if is_c[i]:
            out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="black"/>')
        else:
            out.append(f'<circle cx="{x}" cy="{y}" r="2" fill="white"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_grid_svg(partition, interpolation, spec, path):
    """Draw F-points small, C-points large, and a segment ``i -> j`` for each ``j in C_i``."""
    text = svg_from_figure(figure_data(partition, interpolation), spec.m)
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)


def render_record_svg(record, path):
    if record.figure is None:
        raise ValueError("record carries no figure data")
    m = int(record.spec["N"]) - 1
    Path(path).write_text(svg_from_figure(record.figure, m), encoding="utf-8")
    return Path(path)


# -- interpolation geometry ----------------------------------------------------------

def segment_offsets(interpolation, spec):
    """``(i, dx, dy, |p|)`` for every interpolation segment of the finest grid."""
    out = []
    for i, Ci, pi, _ in interpolation.rows():
        xi, yi = spec.coords(i)
        for j, p in zip(Ci, pi):
            xj, yj = spec.coords(j)
            out.append((i, xj - xi, yj - yi, abs(p)))
    return out


def _line_angle_gap(dx, dy, theta):
    """Angle in degrees between the line through ``(dx, dy)`` and direction ``theta``."""
    phi = math.atan2(dy, dx)
    gap = abs((phi - theta) % math.pi)
    return math.degrees(min(gap, math.pi - gap))


def aligned_fraction(interpolation, spec, theta, tol_deg=15.0, dominant=False):
    """Share of segments (or of rows' largest-weight segments) within ``tol_deg`` of ``theta``."""
    segs = segment_offsets(interpolation, spec)
    if dominant:
        best = {}
        for i, dx, dy, w in segs:
            if i not in best or w > best[i][2]:
                best[i] = (dx, dy, w)
        segs = [(i, dx, dy, w) for i, (dx, dy, w) in best.items()]
    if not segs:
        return float("nan")
    hits = sum(_line_angle_gap(dx, dy, theta) <= tol_deg for _, dx, dy, _ in segs)
    return hits / len(segs)


# -- coarse stencils ---------------------------------------------------------------

def pick_center(partition, spec):
    """C-index of the C-point nearest the middle of the grid."""
    C = partition.C
    if C.size == 0:
        raise ValueError("no C-points")
    mid = (spec.m + 1) / 2.0
    xy = np.array([spec.coords(i) for i in C], dtype=float)
    dist = np.abs(xy - mid).sum(axis=1)
    return int(np.argmin(dist))


def coarse_stencil_report(Ac, partition, spec, center):
    """Row ``center`` of the coarse operator laid out on the fine grid.

    Returns a dict with the centre's fine position, the entries
    ``(dx, dy, value)`` and ``boundary=True`` when some mirrored offset falls
    outside the grid (the stencil is then not a pure interior stencil).
    """
    C = partition.C
    if not 0 <= center < C.size:
        raise IndexError(f"coarse index {center} out of range")
    cx, cy = spec.coords(C[center])
    cols, vals = Ac.row(center)
    entries = []
    boundary = False
    for j, v in zip(cols, vals):
        x, y = spec.coords(C[j])
        dx, dy = x - cx, y - cy
        entries.append({"dx": int(dx), "dy": int(dy), "value": float(v),
                        "negligible": bool(abs(v) < NEGLIGIBLE)})
        mx, my = cx - dx, cy - dy
        if not (1 <= mx <= spec.m and 1 <= my <= spec.m):
            boundary = True
    entries.sort(key=lambda e: (-e["dy"], e["dx"]))
    return {"center": int(center), "fine_index": int(C[center]), "x": int(cx), "y": int(cy),
            "entries": entries, "boundary": boundary}


def dominant_offsets(report, count=2):
    """Off-centre offsets with the largest magnitudes, largest first."""
    off = [e for e in report["entries"] if (e["dx"], e["dy"]) != (0, 0)]
    off.sort(key=lambda e: (-abs(e["value"]), e["dy"], e["dx"]))
    return [(e["dx"], e["dy"], e["value"]) for e in off[:count]]


def stencil_asymmetry(report):
    """Largest ``|v(D) - v(-D)|`` relative to the largest entry; pairs missing a mirror count fully."""
    vals = {(e["dx"], e["dy"]): e["value"] for e in report["entries"]}
    scale = max((abs(v) for v in vals.values()), default=0.0)
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for (dx, dy), v in vals.items():
        worst = max(worst, abs(v - vals.get((-dx, -dy), 0.0)) / scale)
    return worst


def format_stencil(report, digits=2):
    """Text grid of the stencil, values rounded, ``*`` for negligible entries."""
    ents = report["entries"]
    if not ents:
        return ""
    xs = [e["dx"] for e in ents]
    ys = [e["dy"] for e in ents]
    cell = {(e["dx"], e["dy"]): ("*" if e["negligible"] else f"{e['value']:.{digits}f}")
            for e in ents}
    width = max(len(s) for s in cell.values())
    lines = []
    for dy in range(max(ys), min(ys) - 1, -1):
        row = [cell.get((dx, dy), ".").rjust(width) for dx in range(min(xs), max(xs) + 1)]
        lines.append(" ".join(row))
    return "\n".join(lines)
