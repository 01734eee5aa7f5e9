"""Tiny deterministic SVG charts (polylines and bars in a 960x540 viewBox)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 960, 540
MARGIN = dict(left=90, right=180, top=50, bottom=60)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Line:
    label: str
    y: list
    lower: list | None = None
    upper: list | None = None


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-2):
        return f"{v:.2e}"
    return f"{v:.4g}"


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<text x="{(MARGIN["left"] + WIDTH - MARGIN["right"]) / 2}" y="{HEIGHT - 15}" '
        f'text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="20" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 20 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]


def _axes(lo: float, hi: float) -> list[str]:
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>']
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = y0 - (y0 - y1) * k / 4
        out.append(f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{_nice(v)}</text>')
        out.append(f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" stroke="#ddd"/>')
    return out


def _range(values) -> tuple[float, float]:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def line_chart(lines: list[Line], title: str, xlabel: str = "", ylabel: str = "",
               x0_value: float = 0.0) -> str:
    """Polylines with optional shaded bands, one legend entry per line."""
    allv = [v for ln in lines for arr in (ln.y, ln.lower or [], ln.upper or []) for v in arr]
    lo, hi = _range(allv)
    n = max((len(ln.y) for ln in lines), default=1)
    px0, px1 = MARGIN["left"], WIDTH - MARGIN["right"]
    py0, py1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    sx = lambda i: px0 + (px1 - px0) * (i / max(n - 1, 1))
    sy = lambda v: py0 - (py0 - py1) * (v - lo) / (hi - lo)
    out = _frame(title, xlabel, ylabel) + _axes(lo, hi)
    out.append(f'<text x="{px0}" y="{py0 + 18}" text-anchor="middle">{_nice(x0_value)}</text>')
    out.append(f'<text x="{px1}" y="{py0 + 18}" text-anchor="middle">{_nice(x0_value + n - 1)}</text>')
    for k, ln in enumerate(lines):
        color = PALETTE[k % len(PALETTE)]
        if ln.lower is not None and ln.upper is not None:
            pts = [f"{_fmt(sx(i))},{_fmt(sy(v))}" for i, v in enumerate(ln.upper)]
            pts += [f"{_fmt(sx(i))},{_fmt(sy(v))}" for i, v in reversed(list(enumerate(ln.lower)))]
            out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_fmt(sx(i))},{_fmt(sy(v))}" for i, v in enumerate(ln.y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN["top"] + 18 * k
        out.append(f'<rect x="{px1 + 15}" y="{ly}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{px1 + 32}" y="{ly + 10}">{escape(ln.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(categories: list[str], groups: dict[str, list[float]], title: str,
              ylabel: str = "") -> str:
    """Grouped vertical bars: one cluster per category, one bar per group."""
    vals = [v for g in groups.values() for v in g if math.isfinite(v)]
    lo, hi = _range(vals + [0.0])
    px0, px1 = MARGIN["left"], WIDTH - MARGIN["right"]
    py0, py1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    sy = lambda v: py0 - (py0 - py1) * (v - lo) / (hi - lo)
    out = _frame(title, "", ylabel) + _axes(lo, hi)
    n_cat, n_grp = max(len(categories), 1), max(len(groups), 1)
    slot = (px1 - px0) / n_cat
    bw = slot * 0.8 / n_grp
    for c, cat in enumerate(categories):
        cx = px0 + slot * c + slot * 0.1
        out.append(f'<text x="{_fmt(px0 + slot * (c + 0.5))}" y="{py0 + 18}" '
                   f'text-anchor="middle">{escape(cat)}</text>')
        for g, (name, values) in enumerate(groups.items()):
            v = values[c]
            if not math.isfinite(v):
                continue
            y_top, y_base = sy(max(v, 0.0)), sy(min(v, 0.0))
            out.append(f'<rect x="{_fmt(cx + g * bw)}" y="{_fmt(y_top)}" width="{_fmt(bw)}" '
                       f'height="{_fmt(y_base - y_top)}" fill="{PALETTE[g % len(PALETTE)]}" '
                       f'data-value="{v!r}"/>')
    for g, name in enumerate(groups):
        ly = MARGIN["top"] + 18 * g
        out.append(f'<rect x="{px1 + 15}" y="{ly}" width="12" height="12" fill="{PALETTE[g % len(PALETTE)]}"/>')
        out.append(f'<text x="{px1 + 32}" y="{ly + 10}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def hbar_chart(labels: list[str], values: list[float], title: str, xlabel: str = "") -> str:
    """Horizontal bars in the given order (top to bottom), e.g. a feature ranking."""
    px0, px1 = MARGIN["left"] + 60, WIDTH - MARGIN["right"]
    py0, py1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    hi = max([v for v in values if math.isfinite(v)] + [0.0]) or 1.0
    out = _frame(title, xlabel, "")
    n = max(len(labels), 1)
    slot = (py0 - py1) / n
    for k, (lab, v) in enumerate(zip(labels, values)):
        y = py1 + slot * k
        w = (px1 - px0) * max(v, 0.0) / hi
        out.append(f'<text x="{px0 - 6}" y="{_fmt(y + slot * 0.6)}" text-anchor="end">{escape(lab)}</text>')
        out.append(f'<rect x="{px0}" y="{_fmt(y + slot * 0.1)}" width="{_fmt(w)}" '
                   f'height="{_fmt(slot * 0.8)}" fill="{PALETTE[0]}" data-rank="{k + 1}" data-value="{v!r}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
