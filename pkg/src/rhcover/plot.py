"""Top-down SVG rendering of a mission: facets colored by coverage step plus agent tracks."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import Mesh

# anchors of the coverage-time ramp, early to late
RAMP = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
AGENT_COLORS = ("#d62728", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf")

SIZE = 640
MARGIN = 20
LEGEND_W = 200


def ramp_color(t: float) -> str:
    """Hex color at position ``t`` in [0, 1] along the ramp."""
    t = min(max(float(t), 0.0), 1.0) * (len(RAMP) - 1)
    i = min(int(t), len(RAMP) - 2)
    f = t - i
    rgb = [round(a + (b - a) * f) for a, b in zip(RAMP[i], RAMP[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _num(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def render_svg(mesh: Mesh, positions, cover_step: dict, targets, env_lower, env_upper) -> str:
    """SVG text for facets (1-based ``cover_step`` keys) and (S+1, N, 3) agent positions."""
    lo = np.asarray(env_lower, dtype=float)[:2]
    hi = np.asarray(env_upper, dtype=float)[:2]
    scale = (SIZE - 2 * MARGIN) / float(max(hi - lo))

    def xy(p):
        return (MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale)

    positions = np.asarray(positions, dtype=float)
    targets = {int(t) for t in targets}
    last = max(cover_step.values(), default=1)
    first = min(cover_step.values(), default=1)
    span = max(last - first, 1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE + LEGEND_W}" height="{SIZE}" '
        f'viewBox="0 0 {SIZE + LEGEND_W} {SIZE}">',
        f'<rect x="0" y="0" width="{SIZE + LEGEND_W}" height="{SIZE}" fill="#ffffff"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{_num((hi[0] - lo[0]) * scale)}" '
        f'height="{_num((hi[1] - lo[1]) * scale)}" fill="none" stroke="#999999"/>',
        '<g id="facets" stroke-linejoin="round">',
    ]
    # low facets first so the upper surface ends up on top
    order = np.lexsort((np.arange(len(mesh.centroids)), mesh.centroids[:, 2]))
    for i in order:
        tau = int(i) + 1
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in (xy(v) for v in mesh.vertices[i]))
        if tau in cover_step:
            fill = ramp_color((cover_step[tau] - first) / span)
        else:
            fill = "none"
        stroke, width = ("#000000", "1.2") if tau in targets else ("#808080", "0.4")
        out.append(f'<polygon id="f{tau}" points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="{width}"/>')
    out.append("</g>")

    out.append('<g id="agents" fill="none" stroke-width="2">')
    for j in range(positions.shape[1]):
        color = AGENT_COLORS[j % len(AGENT_COLORS)]
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in (xy(p) for p in positions[:, j]))
        out.append(f'<polyline id="agent{j + 1}" points="{pts}" stroke="{color}"/>')
        sx, sy = xy(positions[0, j])
        out.append(f'<circle cx="{_num(sx)}" cy="{_num(sy)}" r="4" fill="{color}" stroke="none"/>')
    out.append("</g>")

    # legend: agents, then the step ramp
    lx = SIZE + 10
    out.append('<g id="legend" font-family="sans-serif" font-size="12">')
    y = MARGIN + 12
    for j in range(positions.shape[1]):
        color = AGENT_COLORS[j % len(AGENT_COLORS)]
        out.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 24}" y2="{y - 4}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 30}" y="{y}">agent {j + 1}</text>')
        y += 18
    y += 10
    out.append(f'<text x="{lx}" y="{y}">coverage step</text>')
    y += 8
    n_swatch = 10
    for s in range(n_swatch):
        out.append(
            f'<rect x="{lx + s * 14}" y="{y}" width="14" height="12" fill="{ramp_color(s / (n_swatch - 1))}"/>'
        )
    y += 26
    out.append(f'<text x="{lx}" y="{y}">{first}</text>')
    out.append(f'<text x="{lx + n_swatch * 14}" y="{y}" text-anchor="end">{last}</text>')
    y += 22
    out.append(
        f'<rect x="{lx}" y="{y - 10}" width="14" height="12" fill="none" stroke="#000000" stroke-width="1.2"/>'
    )
    out.append(f'<text x="{lx + 20}" y="{y}">target facet</text>')
    out.append(f'<text x="{lx + 20}" y="{y + 16}">(no fill: uncovered)</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(mlog, world, path) -> None:
    """Write the top-down SVG of ``mlog`` over the world's mesh."""
    env = world.scenario.environment
    text = render_svg(world.mesh, mlog.positions(), mlog.cover_step(), mlog.targets, env.lower, env.upper)
    Path(path).write_text(text)
