"""Dependency-free deterministic SVG line charts.

Reports come out as standalone .svg files (plus the CSV that fed them); the
rendering is plain string assembly with fixed-precision coordinates so the
same data always produces the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_PANEL_W = 420
_PANEL_H = 300
_MARGIN = dict(left=62, right=16, top=34, bottom=42)


@dataclass(frozen=True)
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ValueError("xs and ys differ in length")
        if not self.xs:
            raise ValueError("a series needs at least one point")


@dataclass(frozen=True)
class Panel:
    title: str
    series: tuple[Series, ...]
    x_label: str = ""
    y_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        if not self.series:
            raise ValueError("a panel needs at least one series")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    if v == int(v) and abs(v) < 1e7:
        return str(int(v))
    return f"{v:.3g}"


def _span(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:  # flat data still needs a nonzero span
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    return lo, hi


def _panel_svg(panel: Panel, x_off: float) -> list[str]:
    ml, mr = _MARGIN["left"], _MARGIN["right"]
    mt, mb = _MARGIN["top"], _MARGIN["bottom"]
    iw = _PANEL_W - ml - mr
    ih = _PANEL_H - mt - mb
    x_lo, x_hi = _span([x for s in panel.series for x in s.xs])
    y_lo, y_hi = _span([y for s in panel.series for y in s.ys])

    def px(x: float) -> float:
        return x_off + ml + (x - x_lo) / (x_hi - x_lo) * iw

    def py(y: float) -> float:
        return mt + ih - (y - y_lo) / (y_hi - y_lo) * ih

    out = [
        f'<rect x="{_fmt(x_off + ml)}" y="{_fmt(mt)}" width="{_fmt(iw)}" '
        f'height="{_fmt(ih)}" fill="none" stroke="#444" stroke-width="1"/>',
        f'<text x="{_fmt(x_off + ml + iw / 2)}" y="{_fmt(mt - 12)}" '
        f'text-anchor="middle" font-size="14" font-weight="bold">{_esc(panel.title)}</text>',
    ]
    # axis ticks: ends and midpoint
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        out.append(
            f'<text x="{_fmt(px(xv))}" y="{_fmt(mt + ih + 16)}" text-anchor="middle" '
            f'font-size="11">{_esc(_fmt_tick(xv))}</text>'
        )
        out.append(
            f'<text x="{_fmt(x_off + ml - 6)}" y="{_fmt(py(yv) + 4)}" text-anchor="end" '
            f'font-size="11">{_esc(_fmt_tick(yv))}</text>'
        )
    if panel.x_label:
        out.append(
            f'<text x="{_fmt(x_off + ml + iw / 2)}" y="{_fmt(mt + ih + 34)}" '
            f'text-anchor="middle" font-size="12">{_esc(panel.x_label)}</text>'
        )
    if panel.y_label:
        cx, cy = x_off + 14, mt + ih / 2
        out.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{_esc(panel.y_label)}</text>'
        )
    for i, s in enumerate(panel.series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(s.xs, s.ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = mt + 14 + 14 * i
        lx = x_off + ml + 8
        out.append(
            f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx + 18)}" '
            f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{_fmt(lx + 24)}" y="{_fmt(ly)}" font-size="11">{_esc(s.label)}</text>'
        )
    return out


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_chart(panels: Sequence[Panel]) -> str:
    """Side-by-side panels as one SVG document string."""
    panels = list(panels)
    if not panels:
        raise ValueError("need at least one panel")
    width = _PANEL_W * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{_PANEL_H}" viewBox="0 0 {width} {_PANEL_H}" '
        f'font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width}" height="{_PANEL_H}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        parts.extend(_panel_svg(panel, i * _PANEL_W))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_chart(panels: Sequence[Panel], path: str | Path) -> None:
    Path(path).write_text(render_chart(panels), encoding="utf-8")


def curve_panels(curve) -> list[Panel]:
    """The two standard training panels: instruction scores and
    response-given-instruction scores over steps."""
    steps = [float(pt.step) for pt in curve]
    return [
        Panel(
            title="instruction logps",
            x_label="step",
            y_label="mean avg logp",
            series=(
                Series("logps(x_w)", steps, [pt.logps_xw for pt in curve]),
                Series("logps(x_l)", steps, [pt.logps_xl for pt in curve]),
            ),
        ),
        Panel(
            title="response logps",
            x_label="step",
            y_label="mean avg logp",
            series=(
                Series("logps(y|x_w)", steps, [pt.logps_y_given_xw for pt in curve]),
                Series("logps(y|x_l)", steps, [pt.logps_y_given_xl for pt in curve]),
            ),
        ),
    ]
