"""Static SVG boxplots for sweep results. No plotting dependency.

Boxes show quartiles and median, whiskers extend to the last datum within
1.5 IQR of the box; everything further out is simply not drawn. Values are
plotted on a log10 axis because the error metrics span several decades.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["grouped_boxplot_svg", "experiment_plots"]

_COLORS = ("#4878d0", "#ee854a", "#6acc64", "#d65f5f")

_FLOOR = 1e-12


def _quartiles(values):
    vals = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return None
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    iqr = q3 - q1
    lo_lim, hi_lim = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = vals[(vals >= lo_lim) & (vals <= hi_lim)]
    return float(inside.min()), float(q1), float(med), float(q3), float(inside.max())


def grouped_boxplot_svg(
    path,
    title: str,
    ylabel: str,
    x_labels,
    group_labels,
    data,
    ref_line: float | None = None,
) -> None:
    """data[group_index][x_index] is the list of values for one box."""
    width, height = 760, 420
    left, right, top, bottom = 70, 20, 46, 52
    plot_w = width - left - right
    plot_h = height - top - bottom

    stats = [[_quartiles(cell) for cell in row] for row in data]
    flat = [v for row in stats for s in row if s for v in s]
    if ref_line is not None:
        flat.append(ref_line)
    flat = [max(v, _FLOOR) for v in flat if v > 0] or [1.0]
    lo = math.floor(math.log10(min(flat)))
    hi = math.ceil(math.log10(max(flat)))
    if lo == hi:
        hi = lo + 1

    def ty(v):
        v = math.log10(max(v, _FLOOR))
        return top + plot_h * (hi - v) / (hi - lo)

    n_x = len(x_labels)
    n_g = len(group_labels)
    slot = plot_w / n_x
    box_w = min(22.0, slot / (n_g + 1))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="16" y="{top + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + plot_h / 2})">{ylabel}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#888"/>',
    ]
    for exp in range(lo, hi + 1):
        y = ty(10.0**exp)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            'stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{exp}</text>'
        )
    if ref_line is not None:
        y = ty(ref_line)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            'stroke="#b22" stroke-dasharray="6 3"/>'
        )
    for xi, label in enumerate(x_labels):
        cx = left + slot * (xi + 0.5)
        parts.append(
            f'<text x="{cx:.1f}" y="{top + plot_h + 18}" text-anchor="middle">{label}</text>'
        )
        for gi in range(n_g):
            s = stats[gi][xi]
            if s is None:
                continue
            w_lo, q1, med, q3, w_hi = (max(v, _FLOOR) for v in s)
            bx = cx + (gi - (n_g - 1) / 2) * (box_w + 6) - box_w / 2
            color = _COLORS[gi % len(_COLORS)]
            mid = bx + box_w / 2
            parts.append(
                f'<line x1="{mid:.1f}" y1="{ty(w_lo):.1f}" x2="{mid:.1f}" '
                f'y2="{ty(q1):.1f}" stroke="{color}"/>'
            )
            parts.append(
                f'<line x1="{mid:.1f}" y1="{ty(q3):.1f}" x2="{mid:.1f}" '
                f'y2="{ty(w_hi):.1f}" stroke="{color}"/>'
            )
            parts.append(
                f'<rect x="{bx:.1f}" y="{ty(q3):.1f}" width="{box_w:.1f}" '
                f'height="{abs(ty(q1) - ty(q3)):.1f}" fill="{color}" '
                'fill-opacity="0.45" stroke="none"/>'
            )
            parts.append(
                f'<line x1="{bx:.1f}" y1="{ty(med):.1f}" x2="{bx + box_w:.1f}" '
                f'y2="{ty(med):.1f}" stroke="{color}" stroke-width="2"/>'
            )
    for gi, label in enumerate(group_labels):
        color = _COLORS[gi % len(_COLORS)]
        lx = left + 10 + gi * 130
        parts.append(
            f'<rect x="{lx}" y="{top - 16}" width="12" height="12" fill="{color}" '
            'fill-opacity="0.45"/>'
        )
        parts.append(f'<text x="{lx + 16}" y="{top - 6}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def experiment_plots(spec, records) -> None:
    """One SVG per metric in spec.out_dir, grouped the way the sweep ran."""
    out = Path(spec.out_dir)
    n_out = len(records[0].errors) if records else 0
    metrics = [("error_j", lambda r: r.error_j, 0.01, "relative squared error")]
    for i in range(n_out):
        metrics.append(
            (f"e{i + 1}", lambda r, i=i: r.errors[i], 1.0, "output error (%)")
        )
        metrics.append(
            (f"poly_e{i + 1}", lambda r, i=i: r.poly_errors[i], 1.0, "output error (%)")
        )
    if spec.kind == "trig":
        groups = [(f"degree {d}", lambda r, d=d: r.degree == d) for d in spec.degrees]
    else:
        groups = [
            ("unconstrained", lambda r: not r.constrained),
            ("constrained", lambda r: r.constrained),
        ]
    for name, metric, ref, ylabel in metrics:
        data = [
            [
                [metric(r) for r in records if pick(r) and r.df == df]
                for df in spec.dfs
            ]
            for _, pick in groups
        ]
        grouped_boxplot_svg(
            out / f"{name}.svg",
            title=f"{spec.kind}: {name} by df",
            ylabel=ylabel,
            x_labels=[str(df) for df in spec.dfs],
            group_labels=[g for g, _ in groups],
            data=data,
            ref_line=ref,
        )
