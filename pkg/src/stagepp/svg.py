"""Minimal SVG line plots: polylines, markers, axes and labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    color: str | None = None
    dashed: bool = False


@dataclass
class Marker:
    x: float
    y: float
    label: str


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    markers: list[Marker] = field(default_factory=list)
    width: int = 640
    height: int = 420

    def line(self, x, y, label: str = "", color: str | None = None, dashed: bool = False) -> "Plot":
        self.series.append(Series(list(map(float, x)), list(map(float, y)), label, color, dashed))
        return self

    def mark(self, x: float, y: float, label: str) -> "Plot":
        self.markers.append(Marker(float(x), float(y), label))
        return self

    def _bounds(self):
        xs = [v for s in self.series for v in s.x if math.isfinite(v)] + [m.x for m in self.markers]
        ys = [v for s in self.series for v in s.y if math.isfinite(v)] + [m.y for m in self.markers]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        ml, mr, mt, mb = 70, 20, 36, 50
        W, H = self.width, self.height
        x0, x1, y0, y1 = self._bounds()

        def px(v):
            return ml + (v - x0) / (x1 - x0) * (W - ml - mr)

        def py(v):
            return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb)

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
            f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>',
        ]
        for k in range(5):
            xv = x0 + k * (x1 - x0) / 4
            yv = y0 + k * (y1 - y0) / 4
            out.append(f'<text x="{px(xv):.1f}" y="{H - mb + 15}" text-anchor="middle">{xv:.4g}</text>')
            out.append(f'<text x="{ml - 5}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
        out.append(f'<text x="{(ml + W - mr) / 2}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{(mt + H - mb) / 2}" text-anchor="middle" transform="rotate(-90 14 {(mt + H - mb) / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            dash = ' stroke-dasharray="5,3"' if s.dashed else ""
            # split at non-finite values so gaps stay gaps
            runs, cur = [], []
            for a, b in zip(s.x, s.y):
                if math.isfinite(a) and math.isfinite(b):
                    cur.append(f"{px(a):.2f},{py(b):.2f}")
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            for r in runs:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash} points="{" ".join(r)}"/>')
            if s.label:
                ly = mt + 14 * (i + 1)
                out.append(f'<line x1="{W - mr - 110}" y1="{ly - 4}" x2="{W - mr - 92}" y2="{ly - 4}" stroke="{color}"{dash}/>')
                out.append(f'<text x="{W - mr - 88}" y="{ly}">{escape(s.label)}</text>')
        for m in self.markers:
            out.append(f'<circle cx="{px(m.x):.2f}" cy="{py(m.y):.2f}" r="3.5" fill="black"/>')
            out.append(f'<text x="{px(m.x) + 6:.2f}" y="{py(m.y) - 6:.2f}">{escape(m.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render())
