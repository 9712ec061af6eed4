"""Self-contained SVG line charts. No plotting dependency for two polylines."""

from __future__ import annotations

__all__ = ["line_chart"]

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 150, 40, 55
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _span(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_chart(title: str, x_label: str, y_label: str,
               series: dict[str, list[tuple[float, float]]]) -> str:
    """Render named (x, y) series as one chart; returns the SVG text."""
    if not series or all(not pts for pts in series.values()):
        raise ValueError("line_chart needs at least one data point")
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x0, x1 = _span(xs)
    y0, y1 = _span(ys)
    px = lambda x: _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)
    py = lambda y: _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
    ]
    # gridlines and tick labels, 5 per axis
    for i in range(5):
        gx = x0 + (x1 - x0) * i / 4
        gy = y0 + (y1 - y0) * i / 4
        parts.append(
            f'<line x1="{px(gx):.1f}" y1="{_MT}" x2="{px(gx):.1f}" '
            f'y2="{_H - _MB}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<line x1="{_ML}" y1="{py(gy):.1f}" x2="{_W - _MR}" '
            f'y2="{py(gy):.1f}" stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{px(gx):.1f}" y="{_H - _MB + 18}" '
            f'text-anchor="middle">{_fmt(gx)}</text>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py(gy) + 4:.1f}" '
            f'text-anchor="end">{_fmt(gy)}</text>'
        )
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#333333"/>'
    )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" '
        f'text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2})">{y_label}</text>'
    )
    for idx, (name, pts) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        for x, y in pts:
            parts.append(
                f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>'
            )
        ly = _MT + 16 + 18 * idx
        parts.append(
            f'<line x1="{_W - _MR + 8}" y1="{ly - 4}" x2="{_W - _MR + 28}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_W - _MR + 33}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
