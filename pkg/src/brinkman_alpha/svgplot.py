"""Static log-log charts as SVG 1.1 text.

Output depends only on the input numbers: coordinates are printed with a
fixed precision and series colours come from a fixed palette.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

PLOT_KINDS = ("loglog_sweep", "fit_check", "error_bars")
SWEEP_Y_COLUMNS = ("max_v_solid", "err_v_pct", "err_p_pct")

WIDTH, HEIGHT = 720, 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 90, 190, 50, 70
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
MAX_TICKS = 12
MINOR_TICK_DECADES = 4
META_NS = "urn:brinkman-alpha:plot"


class PlotError(ValueError):
    pass


@dataclass
class Series:
    label: str
    x: list
    y: list
    yerr: list | None = None
    line: bool = True
    markers: bool = True


def _f(v):
    return f"{v:.2f}"


def _decade_label(k):
    return f"1e{k}"


def _axis_range(values):
    lo = math.floor(math.log10(min(values)))
    hi = math.ceil(math.log10(max(values)))
    if hi == lo:
        hi += 1
    return lo, hi


def _clean(series_list):
    """Drop points that cannot go on log axes; returns (series, warnings)."""
    out, warnings = [], []
    for s in series_list:
        xs, ys, es = [], [], []
        for i, (x, y) in enumerate(zip(s.x, s.y)):
            ok = all(isinstance(v, (int, float)) and math.isfinite(v) and v > 0 for v in (x, y))
            if not ok:
                warnings.append(f"series '{s.label}': skipped point ({x!r}, {y!r}), "
                                "non-positive or non-finite on a log axis")
                continue
            xs.append(float(x))
            ys.append(float(y))
            es.append(float(s.yerr[i]) if s.yerr is not None else 0.0)
        if xs:
            out.append(Series(s.label, xs, ys, es if s.yerr is not None else None,
                              s.line, s.markers))
        else:
            warnings.append(f"series '{s.label}': no plottable points")
    return out, warnings


def render_svg(series_list, xlabel: str, ylabel: str, title: str = "", notes=()) -> str:
    """Log-log chart of ``series_list`` with decade ticks and a legend."""
    series_list, warnings = _clean(series_list)
    if not series_list:
        raise PlotError("nothing to plot: no positive data points")
    warnings = list(notes) + warnings
    xs = [x for s in series_list for x in s.x]
    ys = [y for s in series_list for y in s.y]
    for s in series_list:
        if s.yerr is not None:
            ys += [y + e for y, e in zip(s.y, s.yerr)]
            ys += [y - e for y, e in zip(s.y, s.yerr) if y - e > 0]
    xlo, xhi = _axis_range(xs)
    ylo, yhi = _axis_range(ys)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (math.log10(x) - xlo) / (xhi - xlo) * pw

    def py(y):
        y = max(y, 10.0**ylo)
        return MARGIN_T + ph - (math.log10(y) - ylo) / (yhi - ylo) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:bp="{META_NS}" version="1.1" '
        f'width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(title)}</title>",
        "<metadata>",
    ]
    out += [f"<bp:warning>{escape(w)}</bp:warning>" for w in warnings]
    out += [
        "</metadata>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" '
        'stroke="black"/>',
    ]

    def ticks(lo, hi):
        step = max(1, math.ceil((hi - lo) / MAX_TICKS))
        return range(lo, hi + 1, step)

    if xhi - xlo <= MINOR_TICK_DECADES:
        for k in range(xlo, xhi):
            for m in range(2, 10):
                x = px(m * 10.0**k)
                out.append(f'<line x1="{_f(x)}" y1="{MARGIN_T + ph}" x2="{_f(x)}" '
                           f'y2="{MARGIN_T + ph - 4}" stroke="black"/>')
    if yhi - ylo <= MINOR_TICK_DECADES:
        for k in range(ylo, yhi):
            for m in range(2, 10):
                y = py(m * 10.0**k)
                out.append(f'<line x1="{MARGIN_L}" y1="{_f(y)}" x2="{MARGIN_L + 4}" '
                           f'y2="{_f(y)}" stroke="black"/>')
    for k in ticks(xlo, xhi):
        x = px(10.0**k)
        out.append(f'<line x1="{_f(x)}" y1="{MARGIN_T}" x2="{_f(x)}" y2="{MARGIN_T + ph}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{_f(x)}" y="{MARGIN_T + ph + 18}" font-size="12" '
                   f'text-anchor="middle">{_decade_label(k)}</text>')
    for k in ticks(ylo, yhi):
        y = py(10.0**k)
        out.append(f'<line x1="{MARGIN_L}" y1="{_f(y)}" x2="{MARGIN_L + pw}" y2="{_f(y)}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_f(y + 4)}" font-size="12" '
                   f'text-anchor="end">{_decade_label(k)}</text>')
    out.append(f'<text x="{_f(MARGIN_L + pw / 2)}" y="{HEIGHT - 20}" font-size="14" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    cy = MARGIN_T + ph / 2
    out.append(f'<text x="22" y="{_f(cy)}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 22 {_f(cy)})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{_f(MARGIN_L + pw / 2)}" y="28" font-size="15" '
                   f'text-anchor="middle">{escape(title)}</text>')

    for i, s in enumerate(series_list):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(s.x, s.y)]
        out.append(f'<g class="series" stroke="{color}" fill="{color}">')
        if s.line and len(pts) > 1:
            path = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke-width="1.5"/>')
        if s.yerr is not None:
            for (a, _), y, e in zip(pts, s.y, s.yerr):
                top, bot = py(y + e), py(y - e) if y - e > 0 else MARGIN_T + ph
                out.append(f'<line x1="{_f(a)}" y1="{_f(top)}" x2="{_f(a)}" y2="{_f(bot)}" '
                           'stroke-width="1"/>')
                for yy in (top, bot):
                    out.append(f'<line x1="{_f(a - 4)}" y1="{_f(yy)}" x2="{_f(a + 4)}" '
                               f'y2="{_f(yy)}" stroke-width="1"/>')
        if s.markers:
            for a, b in pts:
                out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="3"/>')
        out.append("</g>")

    lx, ly = MARGIN_L + pw + 15, MARGIN_T + 10
    out.append('<g class="legend" font-size="12">')
    for i, s in enumerate(series_list):
        color = PALETTE[i % len(PALETTE)]
        y = ly + 18 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 20}" y2="{y}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{y + 4}">{escape(s.label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _g(v):
    return f"{v:.6g}"


def sweep_series(table, y_column: str = "max_v_solid"):
    """One series per parameter value of a sweep table."""
    if y_column not in SWEEP_Y_COLUMNS:
        raise PlotError(f"y column must be one of {SWEEP_Y_COLUMNS}, got {y_column!r}")
    attr = {"max_v_solid": "max_v_solid", "err_v_pct": "err_v", "err_p_pct": "err_p"}[y_column]
    series, notes = [], []
    for value in table.parameter_values:
        rows = [r for r in table.rows if r.param_value == value]
        for r in rows:
            if not r.converged:
                notes.append(f"{table.param_name}={_g(value)} alpha_max={_g(r.alpha_max)}: "
                             "failed cell skipped")
        rows = [r for r in rows if r.converged]
        series.append(Series(f"{table.param_name} = {_g(value)}",
                             [r.alpha_max for r in rows],
                             [getattr(r.record, attr) for r in rows]))
    return series, notes


def validation_series(report, error_bars: bool):
    """Data against model alpha_max over the parameter, one pair of series
    per target q (``fit_check``), or data with ``|data - model|`` bars
    (``error_bars``)."""
    series = []
    qs = sorted({p.q for p in report.points})
    for q in qs:
        pts = sorted((p for p in report.points if p.q == q), key=lambda p: p.parameter_value)
        x = [p.parameter_value for p in pts]
        if error_bars:
            series.append(Series(f"q = {_g(q)}", x, [p.alpha_data for p in pts],
                                 [p.abs_error for p in pts], line=False))
        else:
            series.append(Series(f"data, q = {_g(q)}", x, [p.alpha_data for p in pts],
                                 line=False))
            series.append(Series(f"model, q = {_g(q)}", x, [p.alpha_model for p in pts],
                                 markers=False))
    return series


def emit_plot(data, kind: str, y_column: str = "max_v_solid", title: str = "") -> str:
    """SVG for a sweep table (``loglog_sweep``) or a validation report
    (``fit_check``, ``error_bars``)."""
    if kind not in PLOT_KINDS:
        raise PlotError(f"plot kind must be one of {PLOT_KINDS}, got {kind!r}")
    if kind == "loglog_sweep":
        if not getattr(data, "rows", None):
            raise PlotError("sweep table is empty")
        series, notes = sweep_series(data, y_column)
        return render_svg(series, "alpha_max", y_column, title, notes)
    if not getattr(data, "points", None):
        raise PlotError("validation report has no points")
    series = validation_series(data, kind == "error_bars")
    param = {"h_model": "h", "mu_model": "mu", "lc_model": "L_c", "vc_model": "v_c"}[data.kind]
    return render_svg(series, param, "alpha_max", title, data.excluded)
