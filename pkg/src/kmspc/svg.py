"""Dependency-free SVG rendering of T2/SPEx control charts.

Two stacked panels share the sample axis; each shows the statistic trace,
its limit lines and, when known, a dashed marker at the fault onset. Output
is a plain string with fixed number formatting, so identical charts render
to identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .mspc import ControlChart

WIDTH = 800
PANEL_HEIGHT = 260
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 30
GAP = 40
LOG_FLOOR = 1e-12


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float, log_scale: bool) -> str:
    if log_scale:
        return f"1e{int(round(v))}"
    return f"{v:.3g}"


def _panel(values: np.ndarray, limits: list[tuple[str, float, str]], label: str,
           top: float, onset: int | None, log_scale: bool) -> list[str]:
    m = values.size
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = PANEL_HEIGHT - 30
    finite_limits = [v for _, v, _ in limits if math.isfinite(v) and v > 0]
    if log_scale:
        ys = np.log10(np.maximum(values, LOG_FLOOR))
        lim_ys = [math.log10(v) for v in finite_limits]
    else:
        ys = values.astype(float)
        lim_ys = list(finite_limits)
    lo = min([float(ys.min())] + lim_ys) if m else 0.0
    hi = max([float(ys.max())] + lim_ys) if m else 1.0
    if not log_scale:
        lo = min(lo, 0.0)
    if hi - lo <= 0:
        hi = lo + 1.0

    def sx(i: float) -> float:
        return MARGIN_LEFT + (i - 1) / max(m - 1, 1) * plot_w

    def sy(v: float) -> float:
        return top + plot_h - (v - lo) / (hi - lo) * plot_h

    out = [f'<rect x="{MARGIN_LEFT}" y="{_fmt(top)}" width="{plot_w}" height="{plot_h}" '
           'fill="none" stroke="#444"/>']
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = sy(v)
        out.append(f'<text x="{MARGIN_LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-size="10">{escape(_tick_label(v, log_scale))}</text>')
    name = f"log10({label})" if log_scale else label
    out.append(f'<text x="{MARGIN_LEFT}" y="{_fmt(top - 8)}" font-size="12" '
               f'font-weight="bold">{escape(name)}</text>')
    if m:
        pts = " ".join(f"{_fmt(sx(i + 1))},{_fmt(sy(float(v)))}" for i, v in enumerate(ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1"/>')
    for name_, v, colour in limits:
        if not (math.isfinite(v) and v > 0):
            continue
        y = sy(math.log10(v) if log_scale else v)
        out.append(f'<line x1="{MARGIN_LEFT}" y1="{_fmt(y)}" x2="{MARGIN_LEFT + plot_w}" '
                   f'y2="{_fmt(y)}" stroke="{colour}" stroke-width="1"/>')
        out.append(f'<text x="{MARGIN_LEFT + plot_w - 4}" y="{_fmt(y - 3)}" text-anchor="end" '
                   f'font-size="10" fill="{colour}">{escape(name_)}</text>')
    if onset is not None and 1 <= onset <= m:
        x = sx(onset)
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(top)}" x2="{_fmt(x)}" '
                   f'y2="{_fmt(top + plot_h)}" stroke="#555" stroke-dasharray="4,3"/>')
    return out


def chart_svg(chart: ControlChart, title: str = "", log_scale: bool = False) -> str:
    """Render ``chart`` as a two-panel SVG document (T2 above, SPEx below)."""
    height = MARGIN_TOP + 2 * PANEL_HEIGHT + GAP
    lim = chart.limits
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
             f'viewBox="0 0 {WIDTH} {height}">',
             f"<title>{escape(title or 'control chart')}</title>",
             '<rect width="100%" height="100%" fill="white"/>']
    if title:
        parts.append(f'<text x="{WIDTH / 2:.1f}" y="16" text-anchor="middle" '
                     f'font-size="14">{escape(title)}</text>')
    parts += _panel(chart.t2, [("warning", lim.t2_warning, "#d08a00"),
                               ("alarm", lim.t2_alarm, "#c0392b")],
                    "T2", MARGIN_TOP + 10, chart.fault_onset, log_scale)
    parts += _panel(chart.spex, [("warning", lim.spex_warning, "#d08a00"),
                                 ("alarm", lim.spex_limit, "#c0392b")],
                    "SPEx", MARGIN_TOP + PANEL_HEIGHT + GAP, chart.fault_onset, log_scale)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_chart_svg(chart: ControlChart, path, title: str = "", log_scale: bool = False) -> None:
    Path(path).write_text(chart_svg(chart, title, log_scale), encoding="utf-8")
