"""Hand-rolled SVG output.

No plotting library: byte-identical output for identical inputs is a hard
requirement, so everything is formatted explicitly (fixed 6-decimal
floats, insertion-ordered elements, no timestamps or generated ids).
"""

import numpy as np

# tab10-style palette, one color per projection head
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

# three-stop linear colormap for scalar fields (cold -> warm)
FIELD_STOPS = ((0.231, 0.298, 0.753), (0.865, 0.865, 0.865), (0.706, 0.016, 0.150))


def _f(v: float) -> str:
    return f"{v:.6f}"


def field_color(t: float) -> str:
    """Linear interpolation through the three colormap stops, t in [0, 1]."""
    t = min(max(float(t), 0.0), 1.0)
    if t <= 0.5:
        a, b = FIELD_STOPS[0], FIELD_STOPS[1]
        u = t * 2.0
    else:
        a, b = FIELD_STOPS[1], FIELD_STOPS[2]
        u = (t - 0.5) * 2.0
    rgb = [round(255 * ((1.0 - u) * a[i] + u * b[i])) for i in range(3)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def scatter_transform(coords: np.ndarray, size: int = 600, margin: float = 50.0):
    """Uniform-scale data->pixel mapping (y flipped for SVG).

    Returns (xmin, ymin, scale, xoff, yoff); pixel coords are
    px = xoff + (x - xmin) * scale, py = size - (yoff + (y - ymin) * scale).
    """
    xmin, ymin = coords[:, 0].min(), coords[:, 1].min()
    xrange = max(coords[:, 0].max() - xmin, 1e-12)
    yrange = max(coords[:, 1].max() - ymin, 1e-12)
    avail = size - 2.0 * margin
    scale = avail / max(xrange, yrange)
    xoff = margin + (avail - xrange * scale) / 2.0
    yoff = margin + (avail - yrange * scale) / 2.0
    return xmin, ymin, scale, xoff, yoff


def scatter_svg(coords: np.ndarray, labels, size: int = 600) -> str:
    """Colored scatter with one legend entry per distinct label."""
    coords = np.asarray(coords, dtype=np.float64)
    distinct = list(dict.fromkeys(labels))
    color = {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(distinct)}
    xmin, ymin, scale, xoff, yoff = scatter_transform(coords, size)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for (x, y), lab in zip(coords, labels):
        px = xoff + (x - xmin) * scale
        py = size - (yoff + (y - ymin) * scale)
        parts.append(f'<circle cx="{_f(px)}" cy="{_f(py)}" r="3" '
                     f'fill="{color[lab]}" fill-opacity="0.75"/>')
    for i, lab in enumerate(distinct):
        ly = 20 + 18 * i
        parts.append(f'<rect x="12" y="{ly - 9}" width="10" height="10" '
                     f'fill="{color[lab]}"/>')
        parts.append(f'<text x="28" y="{ly}" font-family="sans-serif" '
                     f'font-size="12">{lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def topomap_svg(field: np.ndarray, layout: dict, scores: dict,
                vmin: float, vmax: float, size: int = 600,
                title: str = "") -> str:
    """Scalar field on the unit head circle plus channel markers.

    ``field`` is a grid with NaN outside the circle (row 0 = y = -1);
    ``layout`` maps channel name -> (x, y) in [-1, 1].
    """
    grid_n = field.shape[0]
    cell = size / grid_n
    span = max(vmax - vmin, 1e-12)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 40}" '
        f'viewBox="0 0 {size} {size + 40}">',
        f'<rect width="{size}" height="{size + 40}" fill="white"/>',
    ]
    for r in range(grid_n):
        for c in range(grid_n):
            v = field[r, c]
            if np.isnan(v):
                continue
            px = c * cell
            py = size - (r + 1) * cell  # row 0 sits at the bottom (y = -1)
            t = (v - vmin) / span
            parts.append(f'<rect x="{_f(px)}" y="{_f(py)}" width="{_f(cell + 0.5)}" '
                         f'height="{_f(cell + 0.5)}" fill="{field_color(t)}"/>')
    half = size / 2.0
    parts.append(f'<circle cx="{_f(half)}" cy="{_f(half)}" r="{_f(half)}" '
                 f'fill="none" stroke="black" stroke-width="1.5"/>')
    for name, (x, y) in layout.items():
        px = (x + 1.0) / 2.0 * size
        py = size - (y + 1.0) / 2.0 * size
        parts.append(f'<circle cx="{_f(px)}" cy="{_f(py)}" r="2.5" fill="black"/>')
        parts.append(f'<text x="{_f(px + 4)}" y="{_f(py - 4)}" '
                     f'font-family="sans-serif" font-size="9">{name}</text>')
    caption = f"{title}  min={vmin:.6g} max={vmax:.6g}".strip()
    parts.append(f'<text x="12" y="{size + 24}" font-family="sans-serif" '
                 f'font-size="13">{caption}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
