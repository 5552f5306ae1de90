"""Minimal self-contained SVG line charts with confidence bands.

No plotting dependency: figures are assembled as plain SVG text so the
pipeline can emit diagnostics anywhere.  One file holds a vertical stack
of panels, each a line with an optional shaded band and a zero rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MARGIN_L = 54.0
_MARGIN_R = 14.0
_MARGIN_T = 26.0
_MARGIN_B = 30.0

_LINE = "#08519c"
_BAND = "#9ecae1"
_AXIS = "#444444"
_GRID = "#cccccc"


@dataclass
class Panel:
    """One chart: y (and optional lo/hi band) against x."""

    title: str
    x: np.ndarray
    y: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    xlabel: str = ""

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("panel x and y must be matching 1-D arrays")
        for name in ("lo", "hi"):
            band = getattr(self, name)
            if band is not None:
                band = np.asarray(band, dtype=float)
                if band.shape != self.x.shape:
                    raise ValueError(f"panel {name} shape mismatch")
                setattr(self, name, band)


def _bounds(panel: Panel) -> tuple[float, float]:
    stack = [panel.y]
    if panel.lo is not None:
        stack.append(panel.lo)
    if panel.hi is not None:
        stack.append(panel.hi)
    vals = np.concatenate(stack)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return -1.0, 1.0
    lo = min(float(vals.min()), 0.0)
    hi = max(float(vals.max()), 0.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _polyline(xs: np.ndarray, ys: np.ndarray) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return pts


def _panel_svg(panel: Panel, width: float, height: float, y0: float) -> list[str]:
    x_lo, x_hi = float(panel.x.min()), float(panel.x.max())
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0
    v_lo, v_hi = _bounds(panel)
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def px(x: np.ndarray) -> np.ndarray:
        return _MARGIN_L + (np.asarray(x) - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: np.ndarray) -> np.ndarray:
        return y0 + _MARGIN_T + (v_hi - np.asarray(v)) / (v_hi - v_lo) * plot_h

    out = []
    top, bot = y0 + _MARGIN_T, y0 + _MARGIN_T + plot_h
    left, right = _MARGIN_L, _MARGIN_L + plot_w
    out.append(
        f'<text x="{left:.2f}" y="{y0 + 16:.2f}" font-size="12" '
        f'fill="{_AXIS}" font-family="sans-serif">{panel.title}</text>'
    )
    # frame and zero rule
    out.append(
        f'<rect x="{left:.2f}" y="{top:.2f}" width="{plot_w:.2f}" '
        f'height="{plot_h:.2f}" fill="none" stroke="{_AXIS}" stroke-width="1"/>'
    )
    if v_lo < 0.0 < v_hi:
        zy = float(py(np.array(0.0)))
        out.append(
            f'<line x1="{left:.2f}" y1="{zy:.2f}" x2="{right:.2f}" '
            f'y2="{zy:.2f}" stroke="{_GRID}" stroke-width="1"/>'
        )
    # band
    if panel.lo is not None and panel.hi is not None:
        ok = np.isfinite(panel.lo) & np.isfinite(panel.hi)
        if ok.any():
            xs, lo, hi = panel.x[ok], panel.lo[ok], panel.hi[ok]
            ring = _polyline(
                np.concatenate([px(xs), px(xs)[::-1]]),
                np.concatenate([py(hi), py(lo)[::-1]]),
            )
            out.append(
                f'<polygon points="{ring}" fill="{_BAND}" '
                f'fill-opacity="0.55" stroke="none"/>'
            )
    # line
    ok = np.isfinite(panel.y)
    if ok.any():
        out.append(
            f'<polyline points="{_polyline(px(panel.x[ok]), py(panel.y[ok]))}" '
            f'fill="none" stroke="{_LINE}" stroke-width="1.5"/>'
        )
    # ticks: three y labels, three x labels
    for v in (v_lo, 0.5 * (v_lo + v_hi), v_hi):
        ty = float(py(np.array(v)))
        out.append(
            f'<text x="{left - 6:.2f}" y="{ty + 4:.2f}" font-size="10" '
            f'fill="{_AXIS}" text-anchor="end" font-family="sans-serif">'
            f"{_fmt(v)}</text>"
        )
    for xv in (x_lo, 0.5 * (x_lo + x_hi), x_hi):
        tx = float(px(np.array(xv)))
        out.append(
            f'<text x="{tx:.2f}" y="{bot + 14:.2f}" font-size="10" '
            f'fill="{_AXIS}" text-anchor="middle" font-family="sans-serif">'
            f"{_fmt(xv)}</text>"
        )
    if panel.xlabel:
        out.append(
            f'<text x="{0.5 * (left + right):.2f}" y="{bot + 27:.2f}" '
            f'font-size="10" fill="{_AXIS}" text-anchor="middle" '
            f'font-family="sans-serif">{panel.xlabel}</text>'
        )
    return out


def render_panels(path, panels: list[Panel], width: int = 560,
                  panel_height: int = 210) -> None:
    """Write a vertical stack of panels as one standalone SVG file."""
    if not panels:
        raise ValueError("no panels to render")
    total_h = panel_height * len(panels)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{total_h}" viewBox="0 0 {width} {total_h}">',
        f'<rect width="{width}" height="{total_h}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        parts.extend(_panel_svg(panel, float(width), float(panel_height),
                                float(i * panel_height)))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
