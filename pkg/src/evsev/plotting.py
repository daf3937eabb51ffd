"""Hand-rolled SVG charts: line curves and grouped bars.

Pure string assembly with fixed-precision coordinates, so identical
inputs always produce byte-identical files. No external renderer.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 20, 46, 58
PLOT_W = WIDTH - MARGIN_L - MARGIN_R
PLOT_H = HEIGHT - MARGIN_T - MARGIN_B

PALETTE = ("#2166ac", "#b2182b", "#1a9850", "#762a83", "#e08214", "#4d4d4d")
FONT = "font-family=\"Helvetica,Arial,sans-serif\""


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_value(v: float) -> str:
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.4g}"


def _nice_ceiling(v: float) -> float:
    if v <= 0:
        return 1.0
    import math

    exp = math.floor(math.log10(v))
    frac = v / 10 ** exp
    for step in (1.0, 2.0, 2.5, 5.0, 10.0):
        if frac <= step:
            return step * 10 ** exp
    return 10.0 ** (exp + 1)


def _axes(title: str, x_label: str, y_label: str, y_lo: float, y_hi: float,
          n_ticks: int = 5):
    parts = [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" {FONT} '
        f'font-size="15" fill="#222222">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{MARGIN_T + PLOT_H}" stroke="#333333" stroke-width="1"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + PLOT_H}" '
        f'x2="{MARGIN_L + PLOT_W}" y2="{MARGIN_T + PLOT_H}" '
        f'stroke="#333333" stroke-width="1"/>',
        f'<text x="{MARGIN_L + PLOT_W // 2}" y="{HEIGHT - 12}" '
        f'text-anchor="middle" {FONT} font-size="12" fill="#222222">'
        f'{escape(x_label)}</text>',
        f'<text x="16" y="{MARGIN_T + PLOT_H // 2}" text-anchor="middle" {FONT} '
        f'font-size="12" fill="#222222" transform="rotate(-90 16 '
        f'{MARGIN_T + PLOT_H // 2})">{escape(y_label)}</text>',
    ]
    span = y_hi - y_lo
    for i in range(n_ticks + 1):
        v = y_lo + span * i / n_ticks
        y = MARGIN_T + PLOT_H - PLOT_H * i / n_ticks
        parts.append(
            f'<line x1="{MARGIN_L - 4}" y1="{_fmt(y)}" x2="{MARGIN_L + PLOT_W}" '
            f'y2="{_fmt(y)}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(y + 4)}" text-anchor="end" {FONT} '
            f'font-size="11" fill="#444444">{_tick_value(v)}</text>'
        )
    return parts


def _legend(labels):
    parts = []
    x = MARGIN_L + 8
    y = MARGIN_T + 6
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<rect x="{x}" y="{y + 16 * i}" width="12" height="8" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{x + 17}" y="{y + 8 + 16 * i}" {FONT} font-size="11" '
            f'fill="#222222">{escape(label)}</text>'
        )
    return parts


def line_chart(series, title: str, x_label: str, y_label: str) -> str:
    """``series`` is a list of (label, x_values, y_values)."""
    ys = [v for _, _, yv in series for v in yv]
    xs = [v for _, xv, _ in series for v in xv]
    if not ys:
        ys, xs = [0.0], [0.0]
    y_lo = min(0.0, min(ys))
    y_hi = _nice_ceiling(max(max(ys), y_lo + 1e-9) * 1.02)
    x_lo, x_hi = min(xs), max(xs)
    x_span = (x_hi - x_lo) or 1.0
    parts = _axes(title, x_label, y_label, y_lo, y_hi)
    for i, (label, xv, yv) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = []
        for x, y in zip(xv, yv):
            px = MARGIN_L + PLOT_W * (x - x_lo) / x_span
            py = MARGIN_T + PLOT_H * (1 - (y - y_lo) / (y_hi - y_lo))
            pts.append(f"{_fmt(px)},{_fmt(py)}")
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
    parts.extend(_legend([label for label, _, _ in series]))
    # x-axis end labels
    parts.append(
        f'<text x="{MARGIN_L}" y="{MARGIN_T + PLOT_H + 16}" text-anchor="middle" '
        f'{FONT} font-size="11" fill="#444444">{_tick_value(x_lo)}</text>'
    )
    parts.append(
        f'<text x="{MARGIN_L + PLOT_W}" y="{MARGIN_T + PLOT_H + 16}" '
        f'text-anchor="middle" {FONT} font-size="11" '
        f'fill="#444444">{_tick_value(x_hi)}</text>'
    )
    return _wrap(parts)


def grouped_bars(group_labels, series, title: str, y_label: str) -> str:
    """``series`` is a list of (label, values) with one value per group."""
    vals = [v for _, vv in series for v in vv]
    y_hi = _nice_ceiling(max(vals) * 1.05 if vals else 1.0)
    parts = _axes(title, "", y_label, 0.0, y_hi)
    n_groups = max(1, len(group_labels))
    n_series = max(1, len(series))
    group_w = PLOT_W / n_groups
    bar_w = group_w * 0.7 / n_series
    for g, glabel in enumerate(group_labels):
        for s, (label, vv) in enumerate(series):
            v = vv[g]
            h = PLOT_H * v / y_hi
            x = MARGIN_L + group_w * g + group_w * 0.15 + bar_w * s
            y = MARGIN_T + PLOT_H - h
            color = PALETTE[s % len(PALETTE)]
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(h)}" fill="{color}"/>'
            )
        cx = MARGIN_L + group_w * (g + 0.5)
        parts.append(
            f'<text x="{_fmt(cx)}" y="{MARGIN_T + PLOT_H + 16}" '
            f'text-anchor="middle" {FONT} font-size="10" fill="#444444">'
            f'{escape(str(glabel))}</text>'
        )
    parts.extend(_legend([label for label, _ in series]))
    return _wrap(parts)


def _wrap(parts) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n{body}\n</svg>\n'
    )
