"""Minimal SVG writer for log-log exclusion plots.

Output is a pure function of the inputs (fixed float formatting, no
timestamps), so identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "Marker", "LogLogPlot"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str
    color: Optional[str] = None
    width: float = 1.5
    fill_above: bool = False


@dataclass
class Marker:
    x: float
    y: float
    label: str
    decades_error: Optional[float] = None


@dataclass
class LogLogPlot:
    xlabel: str
    ylabel: str
    title: str = ""
    width: int = 720
    height: int = 520
    margin: Tuple[int, int, int, int] = (40, 170, 60, 80)  # top, right, bottom, left
    series: List[Series] = field(default_factory=list)
    markers: List[Marker] = field(default_factory=list)
    comment: Optional[str] = None

    def _limits(self, axis):
        vals = []
        for s in self.series:
            arr = np.asarray(s.x if axis == 0 else s.y, dtype=float)
            vals.extend(arr[np.isfinite(arr) & (arr > 0)].tolist())
        for m in self.markers:
            v = m.x if axis == 0 else m.y
            vals.append(v)
            if axis == 1 and m.decades_error:
                vals += [v * 10**m.decades_error, v / 10**m.decades_error]
        if not vals:
            return 0, 1
        lo, hi = math.floor(math.log10(min(vals))), math.ceil(math.log10(max(vals)))
        if hi == lo:
            hi += 1
        return lo, hi

    def render(self) -> str:
        top, right, bottom, left = self.margin
        pw, ph = self.width - left - right, self.height - top - bottom
        (x0, x1), (y0, y1) = self._limits(0), self._limits(1)

        def px(x):
            return left + (math.log10(x) - x0) / (x1 - x0) * pw

        def py(y):
            return top + ph - (math.log10(y) - y0) / (y1 - y0) * ph

        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="12">',
        ]
        if self.comment:
            out.append(f"<!-- {escape(self.comment.replace('--', '- -'))} -->")
        out.append(f'<defs><clipPath id="plot"><rect x="{left}" y="{top}" width="{pw}" height="{ph}"/></clipPath></defs>')
        out.append(f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>')
        if self.title:
            out.append(f'<text x="{_f(left + pw / 2)}" y="{top - 15}" text-anchor="middle" font-size="14">{escape(self.title)}</text>')

        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            for seg in _finite_segments(s.x, s.y):
                pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in seg)
                if s.fill_above and len(seg) > 1:
                    poly = f"{_f(px(seg[0][0]))},{_f(top)} {pts} {_f(px(seg[-1][0]))},{_f(top)}"
                    out.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.15" stroke="none" clip-path="url(#plot)"/>')
                out.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{s.width}" clip-path="url(#plot)"/>'
                )

        out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for d in range(x0, x1 + 1):
            x = _f(left + (d - x0) / (x1 - x0) * pw)
            out.append(f'<line x1="{x}" y1="{top + ph}" x2="{x}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{x}" y="{top + ph + 18}" text-anchor="middle">1e{d}</text>')
        for d in range(y0, y1 + 1):
            y = _f(top + ph - (d - y0) / (y1 - y0) * ph)
            out.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{d}</text>')
        out.append(f'<text x="{_f(left + pw / 2)}" y="{self.height - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="20" y="{_f(top + ph / 2)}" text-anchor="middle" '
            f'transform="rotate(-90 20 {_f(top + ph / 2)})">{escape(self.ylabel)}</text>'
        )

        for m in self.markers:
            cx, cy = _f(px(m.x)), _f(py(m.y))
            if m.decades_error:
                ya, yb = _f(py(m.y * 10**m.decades_error)), _f(py(m.y / 10**m.decades_error))
                out.append(f'<line x1="{cx}" y1="{ya}" x2="{cx}" y2="{yb}" stroke="black" stroke-width="1.5"/>')
            out.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="black"/>')
            out.append(f'<text x="{_f(px(m.x) + 7)}" y="{_f(py(m.y) - 6)}">{escape(m.label)}</text>')

        lx, ly = self.width - right + 12, top + 10
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            y = ly + 18 * i
            out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 20}" y2="{y}" stroke="{color}" stroke-width="{s.width}"/>')
            out.append(f'<text x="{lx + 26}" y="{y}" dominant-baseline="middle" font-size="10">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _finite_segments(xs, ys):
    seg, segs = [], []
    for a, b in zip(xs, ys):
        if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b):
            seg.append((float(a), float(b)))
        elif seg:
            segs.append(seg)
            seg = []
    if seg:
        segs.append(seg)
    return segs
