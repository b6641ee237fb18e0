"""Hand-rolled SVG 1.1 emission for BER curves and coordination scatters.

Output is deterministic text: fixed canvas, stable series ordering, and all
coordinates printed with repr-stable %.6g formatting, so identical inputs
produce byte-identical files.  No scripting, no external references.
"""

from __future__ import annotations

import math
import os

from ..errors import ContractError, DegenerateInputError
from ..mac_lab import pearson_rho, read_mac_csv
from .sweep import read_csv

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 150, 28, 48

# canonical scheme order doubles as the legend order
SERIES_STYLE = {
    "baseline": "#888888",
    "perfect_csi": "#111111",
    "per_re_demapper": "#1f77b4",
    "conv_demapper": "#2ca02c",
    "neural_receiver": "#d62728",
    "end_to_end": "#9467bd",
}

PLOT_STYLES = ("ber", "mac")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class _Frame:
    """Maps data coordinates into the plot rectangle."""

    def __init__(self, x_range, y_range, log_y=False):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.log_y = log_y
        if log_y:
            self.y0, self.y1 = math.log10(self.y0), math.log10(self.y1)
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ContractError("plot ranges must be increasing")

    def x(self, v: float) -> float:
        span = WIDTH - MARGIN_L - MARGIN_R
        return MARGIN_L + (v - self.x0) / (self.x1 - self.x0) * span

    def y(self, v: float) -> float:
        if self.log_y:
            v = math.log10(v)
        span = HEIGHT - MARGIN_T - MARGIN_B
        return HEIGHT - MARGIN_B - (v - self.y0) / (self.y1 - self.y0) * span


def _axes(frame: _Frame, x_ticks, y_ticks, x_label, y_label, y_tick_text):
    left, right = MARGIN_L, WIDTH - MARGIN_R
    top, bottom = MARGIN_T, HEIGHT - MARGIN_B
    parts = [
        f'<rect x="{left}" y="{top}" width="{right - left}" '
        f'height="{bottom - top}" fill="none" stroke="#333" stroke-width="1"/>'
    ]
    for tv in x_ticks:
        px = _fmt(frame.x(tv))
        parts.append(f'<line x1="{px}" y1="{bottom}" x2="{px}" y2="{bottom + 5}" '
                     f'stroke="#333" stroke-width="1"/>')
        parts.append(f'<text x="{px}" y="{bottom + 18}" font-size="11" '
                     f'text-anchor="middle" fill="#333">{_fmt(tv)}</text>')
    for tv, label in zip(y_ticks, y_tick_text):
        py = _fmt(frame.y(tv))
        parts.append(f'<line x1="{left - 5}" y1="{py}" x2="{left}" y2="{py}" '
                     f'stroke="#333" stroke-width="1"/>')
        parts.append(f'<text x="{left - 8}" y="{py}" font-size="11" '
                     f'text-anchor="end" dominant-baseline="middle" '
                     f'fill="#333">{label}</text>')
    parts.append(f'<text x="{(left + right) / 2:.6g}" y="{HEIGHT - 10}" '
                 f'font-size="12" text-anchor="middle" fill="#111">'
                 f'{_escape(x_label)}</text>')
    parts.append(f'<text x="16" y="{(top + bottom) / 2:.6g}" font-size="12" '
                 f'text-anchor="middle" fill="#111" '
                 f'transform="rotate(-90 16 {(top + bottom) / 2:.6g})">'
                 f'{_escape(y_label)}</text>')
    return parts


def _document(body_parts) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n'
    )
    return head + "\n".join(body_parts) + "\n</svg>\n"


def _decade_ticks(lo: float, hi: float):
    lo_e = math.floor(math.log10(lo) + 1e-12)
    hi_e = math.ceil(math.log10(hi) - 1e-12)
    ticks = [10.0 ** e for e in range(lo_e, hi_e + 1)]
    return ticks, [f"1e{e}" if e else "1" for e in range(lo_e, hi_e + 1)]


def ber_curve_svg(records) -> str:
    """Log-y BER vs Es/N0, one polyline per scheme; zero-BER points dropped."""
    by_scheme = {}
    for rec in records:
        by_scheme.setdefault(rec.scheme, []).append(rec)
    xs = [rec.esno_db for rec in records]
    positive = [rec.ber for rec in records if rec.ber > 0]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 20.0)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo = min(positive) if positive else 1e-5
    y_hi = max(positive) if positive else 1.0
    y_lo = 10.0 ** math.floor(math.log10(y_lo) + 1e-12)
    y_hi = 10.0 ** math.ceil(math.log10(y_hi) - 1e-12)
    if y_hi <= y_lo:
        y_hi = y_lo * 10.0
    frame = _Frame((x_lo, x_hi), (y_lo, y_hi), log_y=True)

    n_x = min(10, max(2, int(round(x_hi - x_lo)) + 1))
    x_ticks = [x_lo + (x_hi - x_lo) * i / (n_x - 1) for i in range(n_x)]
    y_ticks, y_text = _decade_ticks(y_lo, y_hi)
    parts = _axes(frame, x_ticks, y_ticks, "Es/N0 (dB)", "BER", y_text)

    legend_y = MARGIN_T + 12
    for scheme in sorted(by_scheme, key=lambda s: list(SERIES_STYLE).index(s)
                         if s in SERIES_STYLE else len(SERIES_STYLE)):
        color = SERIES_STYLE.get(scheme, "#e377c2")
        pts = sorted(by_scheme[scheme], key=lambda r: r.esno_db)
        coords = [(frame.x(r.esno_db), frame.y(max(r.ber, y_lo)))
                  for r in pts if r.ber > 0]
        if coords:
            path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in coords)
            parts.append(f'<polyline points="{path}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
            for px, py in coords:
                parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" '
                             f'fill="{color}"/>')
        lx = WIDTH - MARGIN_R + 10
        parts.append(f'<line x1="{lx}" y1="{legend_y - 4}" x2="{lx + 18}" '
                     f'y2="{legend_y - 4}" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{lx + 24}" y="{legend_y}" font-size="11" '
                     f'fill="#111">{_escape(scheme)}</text>')
        legend_y += 16
    return _document(parts)


def mac_scatter_svg(records) -> str:
    """IC (bits) vs mean SDU rate scatter with a Pearson-rho annotation."""
    xs = [rec.ic_bits for rec in records]
    ys = [rec.mean_sdu_rate for rec in records]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    pad_x = (x_hi - x_lo) * 0.08 or 0.05
    pad_y = (y_hi - y_lo) * 0.08 or 0.05
    frame = _Frame((x_lo - pad_x, x_hi + pad_x), (y_lo - pad_y, y_hi + pad_y))

    x_ticks = [frame.x0 + (frame.x1 - frame.x0) * i / 4 for i in range(5)]
    y_ticks = [frame.y0 + (frame.y1 - frame.y0) * i / 4 for i in range(5)]
    parts = _axes(frame, x_ticks, y_ticks, "information coordination (bits)",
                  "mean SDU rate", [_fmt(t) for t in y_ticks])

    for rec in records:
        parts.append(f'<circle cx="{_fmt(frame.x(rec.ic_bits))}" '
                     f'cy="{_fmt(frame.y(rec.mean_sdu_rate))}" r="3.5" '
                     f'fill="#1f77b4" fill-opacity="0.75"/>')
    if len(records) >= 3:
        try:
            rho = pearson_rho([(r.ic_bits, r.mean_sdu_rate) for r in records])
            note = f"Pearson rho = {rho:.3f}"
        except DegenerateInputError:
            note = "Pearson rho undefined (zero variance)"
        parts.append(f'<text x="{MARGIN_L + 10}" y="{MARGIN_T + 16}" '
                     f'font-size="12" fill="#111">{_escape(note)}</text>')
    return _document(parts)


def emit_plot(csv_paths, style: str, out_path: str) -> None:
    """Render one or more CSVs into a single SVG; style is 'ber' or 'mac'."""
    if style not in PLOT_STYLES:
        raise ContractError(f"unknown plot style {style!r}, expected one of "
                            f"{', '.join(PLOT_STYLES)}")
    records = []
    for path in csv_paths:
        records.extend(read_csv(path) if style == "ber" else read_mac_csv(path))
    svg = ber_curve_svg(records) if style == "ber" else mac_scatter_svg(records)
    tmp = out_path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
    os.replace(tmp, out_path)
