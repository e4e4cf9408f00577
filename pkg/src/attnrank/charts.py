"""Dependency-free SVG line charts for layer curves.

Hand-built SVG keeps figure output diffable in CI and avoids pulling a
plotting stack into the engine.
"""

from __future__ import annotations

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 840, 440
_ML, _MR, _MT, _MB = 60, 20, 30, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def line_chart(
    series: list[tuple[str, list[float]]],
    title: str = "",
    x_label: str = "layer index",
    y_label: str = "metric",
) -> str:
    """Render one polyline per (label, values) series; x is the index."""
    if not series or any(len(vals) == 0 for _, vals in series):
        raise ValueError("every series needs at least one point")
    x_max = max(len(vals) for _, vals in series) - 1
    y_lo = min(min(vals) for _, vals in series)
    y_hi = max(max(vals) for _, vals in series)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(i: float) -> float:
        return _ML + (plot_w * i / x_max if x_max > 0 else plot_w / 2)

    def sy(v: float) -> float:
        return _MT + plot_h * (1 - (v - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # Axes and ticks.
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    for t in range(5):
        v = y_lo + (y_hi - y_lo) * t / 4
        y = sy(v)
        out.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="black"/>')
        out.append(
            f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{_fmt(v)}</text>'
        )
    x_step = max(1, (x_max + 1) // 8) if x_max > 0 else 1
    for i in range(0, x_max + 1, x_step):
        x = sx(i)
        out.append(
            f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" y2="{_H - _MB + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{x:.1f}" y="{_H - _MB + 18}" text-anchor="middle" font-size="11">{i}</text>'
        )
    if title:
        out.append(
            f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>'
        )
    out.append(
        f'<text x="{_W / 2:.0f}" y="{_H - 12}" text-anchor="middle" font-size="12">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H / 2:.0f})">{y_label}</text>'
    )
    # Series.
    for s, (label, vals) in enumerate(series):
        color = _PALETTE[s % len(_PALETTE)]
        points = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in enumerate(vals))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = _MT + 14 + 16 * s
        out.append(
            f'<line x1="{_W - _MR - 130}" y1="{ly - 4}" x2="{_W - _MR - 106}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(f'<text x="{_W - _MR - 100}" y="{ly}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
