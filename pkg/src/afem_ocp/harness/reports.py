"""Run reports: a CSV ledger, a log-log SVG convergence plot and VTK meshes.

Nothing here needs a plotting or VTK library; all three formats are plain
text written directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["CSV_COLUMNS", "RunConfig", "SvgSeries", "read_csv", "write_csv",
           "write_reports", "write_svg", "write_vtk", "svg_mapping"]

CSV_COLUMNS = ("iter", "n_elements", "n_dofs", "eta_y", "eta_p", "eta_total", "osc_total",
               "marked", "err_y", "err_p", "err_yp", "err_u")
_INT_COLUMNS = {"iter", "n_elements", "n_dofs", "marked"}

WIDTH, HEIGHT = 800, 600
# plot box inside the canvas: left, top, right, bottom
BOX = (90.0, 40.0, 770.0, 530.0)


@dataclass
class RunConfig:
    """What a harness run does and where it writes."""

    example: str
    theta: float
    mode: str = "adaptive"
    max_dofs: float = 30000
    max_iters: float = math.inf
    out: Path = Path("afem_out")
    vtk: bool = False
    gamma_scan: bool = False
    seed: int = 0
    damping: float = 1.0
    quadrature: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError("mode must be 'adaptive' or 'uniform'")
        self.out = Path(self.out)


def _value(rec, name):
    return rec.get(name) if isinstance(rec, dict) else getattr(rec, name, None)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(records, path):
    """One row per record, fixed column order; missing errors are empty fields."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([_fmt(_value(rec, c)) for c in CSV_COLUMNS])
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: a list of dicts, empty fields as None."""
    rows = []
    with Path(path).open(newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in _INT_COLUMNS:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


@dataclass
class SvgSeries:
    label: str
    x: np.ndarray
    y: np.ndarray
    color: str = "black"


def _decade_range(values):
    lo, hi = np.log10(np.min(values)), np.log10(np.max(values))
    lo, hi = math.floor(lo), math.ceil(hi)
    if hi == lo:
        hi = lo + 1
    return lo, hi


def svg_mapping(xr, yr):
    """Functions taking log10 data coordinates to canvas pixels."""
    x0, y0, x1, y1 = BOX

    def to_px(lx, ly):
        px = x0 + (lx - xr[0]) / (xr[1] - xr[0]) * (x1 - x0)
        py = y1 - (ly - yr[0]) / (yr[1] - yr[0]) * (y1 - y0)
        return px, py

    return to_px


def write_svg(series, path, title="", guide_slope=-0.5, xlabel="degrees of freedom"):
    """Log-log plot of positive series with a guide line through the last point
    of the first series.

    The root element records the plotted decades (``data-log-x``,
    ``data-log-y``) and the plot box (``data-box``) so the pixel mapping can
    be inverted by readers.
    """
    series = [s for s in series if len(s.x) and np.all(np.asarray(s.y) > 0)]
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series])
    xr, yr = _decade_range(xs), _decade_range(ys)
    to_px = svg_mapping(xr, yr)
    x0, y0, x1, y1 = BOX

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'data-log-x="{xr[0]} {xr[1]}" data-log-y="{yr[0]} {yr[1]}" '
        f'data-box="{x0:g} {y0:g} {x1:g} {y1:g}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{x0:g}" y="{y0:g}" width="{x1 - x0:g}" height="{y1 - y0:g}" '
        'fill="none" stroke="black"/>',
    ]
    for e in range(xr[0], xr[1] + 1):
        px, _ = to_px(e, yr[0])
        out.append(f'<line x1="{px:.3f}" y1="{y0:g}" x2="{px:.3f}" y2="{y1:g}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{px:.3f}" y="{y1 + 20:g}" text-anchor="middle" '
                   f'font-size="13">1e{e}</text>')
    for e in range(yr[0], yr[1] + 1):
        _, py = to_px(xr[0], e)
        out.append(f'<line x1="{x0:g}" y1="{py:.3f}" x2="{x1:g}" y2="{py:.3f}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 8:g}" y="{py + 4:.3f}" text-anchor="end" '
                   f'font-size="13">1e{e}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:g}" y="{HEIGHT - 20}" text-anchor="middle" '
               f'font-size="14">{escape(xlabel)}</text>')
    if title:
        out.append(f'<text x="{(x0 + x1) / 2:g}" y="25" text-anchor="middle" '
                   f'font-size="16">{escape(title)}</text>')

    for s in series:
        pts = " ".join("%.3f,%.3f" % to_px(lx, ly)
                       for lx, ly in zip(np.log10(s.x), np.log10(s.y)))
        out.append(f'<polyline class="series" data-label="{escape(s.label)}" '
                   f'fill="none" stroke="{s.color}" stroke-width="2" points="{pts}"/>')

    # guide through the last point of the primary series, clipped to the x range
    first = series[0]
    lx_end, ly_end = np.log10(first.x[-1]), np.log10(first.y[-1])
    ends = []
    for lx in (float(np.log10(first.x[0])), float(lx_end)):
        ends.append(to_px(lx, ly_end + guide_slope * (lx - lx_end)))
    (gx0, gy0), (gx1, gy1) = ends
    out.append(f'<path id="guide" data-slope="{guide_slope:g}" fill="none" stroke="gray" '
               f'stroke-dasharray="6,4" d="M {gx0:.3f} {gy0:.3f} L {gx1:.3f} {gy1:.3f}"/>')

    # legend, lower left: decaying curves leave that corner empty
    entries = [(s.label, s.color, "") for s in series]
    entries.append((f"slope {guide_slope:g}", "gray", ' stroke-dasharray="6,4"'))
    lx, ly = x0 + 20, y1 - 22 * len(entries) - 4
    out.append(f'<g id="legend"><rect x="{lx - 10:g}" y="{ly - 12:g}" width="200" '
               f'height="{22 * len(entries) + 6}" fill="white" stroke="black"/>')
    for k, (label, color, dash) in enumerate(entries):
        yy = ly + 22 * k
        out.append(f'<line x1="{lx:g}" y1="{yy:g}" x2="{lx + 30:g}" y2="{yy:g}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 38:g}" y="{yy + 4:g}" font-size="13">'
                   f'{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


_COLORS = {"err_yp": "#1f77b4", "eta_total": "#d62728", "err_u": "#2ca02c",
           "osc_total": "#9467bd"}
_LABELS = {"err_yp": "energy error (y, p)", "eta_total": "estimator eta",
           "err_u": "L2 error u", "osc_total": "oscillation"}


def convergence_series(records):
    """Plot series from records; the error leads when it is available."""
    recs = list(records)
    names = ["err_yp", "eta_total", "err_u", "osc_total"]
    if _value(recs[0], "err_yp") is None:
        names = ["eta_total", "osc_total"]
    x = np.array([_value(r, "n_dofs") for r in recs], float)
    out = []
    for n in names:
        y = np.array([_value(r, n) for r in recs], float)
        keep = y > 0
        if keep.any():
            out.append(SvgSeries(_LABELS[n], x[keep], y[keep], _COLORS[n]))
    return out


def write_vtk(path, mesh, cell_data=None, point_data=None, title="afem_ocp mesh"):
    """Legacy ASCII VTK 3.0 unstructured grid of triangles (cell type 5)."""
    pts = np.asarray(mesh.points, float)
    tri = np.asarray(mesh.elements, np.int64)
    n, m = len(pts), len(tri)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tri]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m

    def block(kind, count, data):
        if not data:
            return
        lines.append(f"{kind} {count}")
        for name, vals in data.items():
            vals = np.asarray(vals, float).ravel()
            if vals.shape != (count,):
                raise ValueError(f"field {name!r} has {vals.size} values, expected {count}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(format(v, ".17g") for v in vals)

    block("CELL_DATA", m, cell_data)
    block("POINT_DATA", n, point_data)
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_reports(records, config):
    """Write ``records.csv`` and ``convergence.svg`` into ``config.out``."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    title = f"example {config.example}, {config.mode}"
    if config.mode == "adaptive":
        title += f", theta = {config.theta:g}"
    files = {"csv": write_csv(records, out / "records.csv"),
             "svg": write_svg(convergence_series(records), out / "convergence.svg", title)}
    return files
