"""Minimal SVG line charts for run CSVs.

Wide-format CSV: the first column is the x axis, every further column is
one series; one <polyline> is emitted per series. No plotting dependency,
so the output is byte-deterministic.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 24, 24, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class PlotError(ValueError):
    pass


def parse_table(text: str) -> tuple[list[str], list[list[float]]]:
    """Parse a wide CSV; raises PlotError naming the offending line."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        return [], []
    reader = csv.reader(lines)
    header = next(reader)
    if len(header) < 2:
        raise PlotError("line 1: need an x column and at least one series column")
    rows: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise PlotError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise PlotError(f"line {lineno}: non-numeric value in {row!r}") from None
    return header, rows


def _scale(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = abs(lo) * 0.5 + 1.0
        return lo - pad, lo + pad
    return lo, hi


def render_svg(header: list[str], rows: list[list[float]]) -> str:
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP  # pixel y grows downward
    buf = io.StringIO()
    buf.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
    )
    buf.write(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n')
    buf.write(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>\n'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>\n'
    )
    xlabel = header[0] if header else "x"
    buf.write(
        f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="14">{xlabel}</text>\n'
    )
    buf.write(
        f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">value</text>\n'
    )
    if rows and header:
        xs = [r[0] for r in rows]
        ys = [v for r in rows for v in r[1:]]
        xmin, xmax = _scale(min(xs), max(xs))
        ymin, ymax = _scale(min(ys), max(ys))

        def px(x: float) -> float:
            return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0)

        def py(y: float) -> float:
            return y0 - (y - ymin) / (ymax - ymin) * (y0 - y1)

        for tick, anchor in ((xmin, x0), (xmax, x1)):
            buf.write(
                f'<text x="{anchor}" y="{y0 + 18}" text-anchor="middle" '
                f'font-size="12">{tick:g}</text>\n'
            )
        for tick in (ymin, ymax):
            buf.write(
                f'<text x="{x0 - 6}" y="{py(tick):.2f}" text-anchor="end" '
                f'font-size="12">{tick:g}</text>\n'
            )
        for si, name in enumerate(header[1:]):
            color = PALETTE[si % len(PALETTE)]
            points = " ".join(f"{px(r[0]):.2f},{py(r[si + 1]):.2f}" for r in rows)
            buf.write(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{points}"/>\n'
            )
            buf.write(
                f'<text x="{x1 - 6}" y="{y1 + 16 * (si + 1)}" text-anchor="end" '
                f'font-size="12" fill="{color}">{name}</text>\n'
            )
    buf.write("</svg>\n")
    return buf.getvalue()


def render_csv(text: str) -> str:
    header, rows = parse_table(text)
    return render_svg(header, rows)


def plot(csv_path: str | Path, out_svg: str | Path) -> None:
    svg = render_csv(Path(csv_path).read_text())
    Path(out_svg).write_text(svg)
