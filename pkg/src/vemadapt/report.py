"""CSV run histories and SVG mesh pictures."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import PolyMesh

CSV_COLUMNS = ("iter", "cells", "ndofs", "h1err", "eta", "theta", "xi", "psi", "total", "effectivity", "seconds")

# a few stops of a perceptually ordered blue-to-yellow ramp
_RAMP = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


def _fmt(x) -> str:
    # repr of a Python float is locale independent and round-trips exactly
    return repr(float(x)) if not isinstance(x, (int, np.integer)) else str(int(x))


def history_rows(history) -> list:
    rows = []
    for r in history.records:
        b = r.breakdown
        rows.append((r.iteration, r.cells, r.ndofs, b.h1err, b.eta, b.theta, b.xi, b.psi,
                     b.total, b.effectivity, r.seconds))
    return rows


def write_csv(history, path) -> None:
    if not history.records:
        raise ValueError("cannot write an empty history")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in history_rows(history):
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> dict:
    """Columns of a history CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [[float(v) for v in row] for row in rd]
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def _colour(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def svg_string(mesh: PolyMesh, field=None, size: int = 600, stroke: float | None = None) -> str:
    """SVG text for the mesh; elements are filled by log10 of ``field`` when given."""
    (x0, y0), (x1, y1) = mesh.bounding_box()
    span = max(x1 - x0, y1 - y0)
    pad = 0.02 * span
    scale = size / (span + 2 * pad)
    w = (x1 - x0 + 2 * pad) * scale
    h = (y1 - y0 + 2 * pad) * scale
    if stroke is None:
        stroke = max(0.2, 1.5 / np.sqrt(max(mesh.n_elements, 1)) * 10)

    fills = ["#ffffff"] * mesh.n_elements
    if field is not None:
        vals = np.asarray(field, dtype=float)
        if vals.shape != (mesh.n_elements,):
            raise ValueError("field needs one value per element")
        pos = vals > 0
        if pos.any():
            lv = np.full(vals.shape, np.nan)
            lv[pos] = np.log10(vals[pos])
            lo, hi = np.nanmin(lv), np.nanmax(lv)
            rng = hi - lo if hi > lo else 1.0
            fills = [_colour((v - lo) / rng) if np.isfinite(v) else _colour(0.0) for v in lv]

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">']
    for e, loop in enumerate(mesh.elements):
        p = mesh.vertices[loop]
        px = (p[:, 0] - x0 + pad) * scale
        py = h - (p[:, 1] - y0 + pad) * scale
        d = "M " + " L ".join(f"{a:.3f} {b:.3f}" for a, b in zip(px, py)) + " Z"
        out.append(f'<path d="{d}" fill="{fills[e]}" stroke="#000000" stroke-width="{stroke:.3f}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(mesh: PolyMesh, path, field=None) -> None:
    Path(path).write_text(svg_string(mesh, field))


def summary_text(history) -> str:
    rows = history_rows(history)
    last = history.records[-1]
    b = last.breakdown
    lines = [
        f"problem: {history.problem}",
        f"iterations: {len(rows)}",
        f"stop: {history.stop_reason}",
        f"final cells: {last.cells}",
        f"final ndofs: {last.ndofs}",
        f"final estimator: {b.total:.6e}",
        f"final h1 error: {b.h1err:.6e}",
        f"final effectivity: {b.effectivity:.4f}",
    ]
    n = len(rows)
    for name in ("h1err", "total"):
        lines.append(f"slope {name} (all): {history.slope(name):.4f}")
        if n > 5:
            lines.append(f"slope {name} (last 5): {history.slope(name, 5):.4f}")
    return "\n".join(lines) + "\n"
