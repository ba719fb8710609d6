"""Minimal native SVG scatter/line plots (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ["#1f5fbf", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Series:
    label: str
    x: list
    y: list
    color: str | None = None
    line: bool = False
    marker: bool = True
    radius: float = 2.5


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    width: int = 640
    height: int = 420
    series: list[Series] = field(default_factory=list)

    def add(self, series: Series) -> "Figure":
        if series.color is None:
            series.color = PALETTE[len(self.series) % len(PALETTE)]
        self.series.append(series)
        return self

    def _points(self):
        for s in self.series:
            for x, y in zip(s.x, s.y):
                x, y = float(x), float(y)
                if not (math.isfinite(x) and math.isfinite(y)):
                    continue
                if (self.logx and x <= 0) or (self.logy and y <= 0):
                    continue
                yield s, x, y

    def render(self) -> str:
        tx = math.log10 if self.logx else (lambda v: v)
        ty = math.log10 if self.logy else (lambda v: v)
        pts = [(s, tx(x), ty(y)) for s, x, y in self._points()]
        left, right, top, bottom = 70, 150, 40, 50
        w, h = self.width - left - right, self.height - top - bottom
        if pts:
            x0, x1 = min(p[1] for p in pts), max(p[1] for p in pts)
            y0, y1 = min(p[2] for p in pts), max(p[2] for p in pts)
        else:
            x0 = y0 = 0.0
            x1 = y1 = 1.0
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        padx, pady = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
        x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

        def px(v):
            return left + (v - x0) / (x1 - x0) * w

        def py(v):
            return top + h - (v - y0) / (y1 - y0) * h

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" font-family="sans-serif" font-size="11">',
               f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
               f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>']
        for i in range(5):
            fx = x0 + (x1 - x0) * i / 4
            fy = y0 + (y1 - y0) * i / 4
            lx = f"{10 ** fx:.3g}" if self.logx else f"{fx:.3g}"
            ly = f"{10 ** fy:.3g}" if self.logy else f"{fy:.3g}"
            out.append(f'<text x="{px(fx):.1f}" y="{top + h + 15}" text-anchor="middle">{lx}</text>')
            out.append(f'<text x="{left - 5}" y="{py(fy) + 4:.1f}" text-anchor="end">{ly}</text>')
        out.append(f'<text x="{left + w / 2}" y="{top - 15}" text-anchor="middle" '
                   f'font-size="13">{escape(self.title)}</text>')
        out.append(f'<text x="{left + w / 2}" y="{self.height - 10}" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{top + h / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 15 {top + h / 2})">{escape(self.ylabel)}</text>')
        for k, s in enumerate(self.series):
            mine = [(x, y) for t, x, y in pts if t is s]
            if s.line and len(mine) > 1:
                path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in mine)
                out.append(f'<polyline points="{path}" fill="none" stroke="{s.color}"/>')
            if s.marker:
                out.extend(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="{s.radius}" '
                           f'fill="{s.color}"/>' for x, y in mine)
            ly = top + 15 + 16 * k
            out.append(f'<circle cx="{left + w + 15}" cy="{ly - 4}" r="4" fill="{s.color}"/>')
            out.append(f'<text x="{left + w + 25}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render())
