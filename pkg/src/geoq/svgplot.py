"""SVG heatmap of per-node load over the planar deployment.

One circle marker per physical node; fill interpolates a fixed 5-stop ramp
(dark blue, light blue, pale yellow, orange, red) from the file's minimum to
maximum load.
"""
from __future__ import annotations

import numpy as np

RAMP = (
    (0.00, (44, 123, 182)),
    (0.25, (171, 217, 233)),
    (0.50, (255, 255, 191)),
    (0.75, (253, 174, 97)),
    (1.00, (215, 25, 28)),
)


def ramp_color(t: float) -> str:
    t = min(max(float(t), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(RAMP[:-1], RAMP[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"
    return "#d7191c"


def heatmap_svg(points, load, radius: float | None = None) -> str:
    """Render node loads as colored markers; viewBox is the point bounding box."""
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(load, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    if radius is None:
        radius = 0.5 * float(max(span[0], span[1])) / max(np.sqrt(len(pts)), 1.0)
    vmin, vmax = float(vals.min()), float(vals.max())
    den = vmax - vmin if vmax > vmin else 1.0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{lo[0]:.6g} {lo[1]:.6g} {span[0]:.6g} {span[1]:.6g}">',
        f'<!-- load range [{vmin:.6g}, {vmax:.6g}]; 5-stop ramp blue-red -->',
    ]
    for (x, y), v in zip(pts, vals):
        color = ramp_color((v - vmin) / den)
        lines.append(f'<circle cx="{x:.6g}" cy="{y:.6g}" r="{radius:.6g}" '
                     f'fill="{color}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
