"""Figure rendering for the visual prompts.

Produces the two sub-figures the vision prompt needs — "A" (vertex layout
with annotated IDs) and "B" (layout plus traveling routes) — and their
side-by-side composite.  Every render returns both a PNG (what the model
receives) and an SVG mirror of the same scene; raster pixels are opaque to
assertions, so tests count markers/labels/polylines in the SVG.

Rendering is a pure function of (instance, solution, spec): identical
inputs give byte-identical PNG and SVG output.
"""

from __future__ import annotations

import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

from PIL import Image, ImageDraw, ImageFont

from mllm_cvrp.core import Instance, Solution

PALETTE = (
    (214, 39, 40), (31, 119, 180), (44, 160, 44), (255, 127, 14),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 152, 150),
)


@dataclass(frozen=True)
class RenderSpec:
    panel_size: int = 1024
    margin_frac: float = 0.08
    gutter: int = 24
    base_font: int = 16
    min_font: int = 8  # legibility floor for the largest benchmark instances
    base_marker: int = 8
    palette: tuple = PALETTE

    def font_size(self, n_vertices: int) -> int:
        scaled = int(self.base_font * math.sqrt(40 / max(n_vertices, 1)))
        return max(self.min_font, min(self.base_font, scaled))

    def marker_radius(self, n_vertices: int) -> int:
        scaled = int(self.base_marker * math.sqrt(40 / max(n_vertices, 1)))
        return max(3, min(self.base_marker, scaled))


@dataclass(frozen=True)
class Rendered:
    """A finished figure: raster bytes plus the SVG scene mirror."""

    png: bytes
    svg: str

    def _svg_root(self):
        return ET.fromstring(self.svg)

    def marker_count(self) -> int:
        root = self._svg_root()
        return sum(1 for el in root.iter() if el.get("class", "").startswith("marker"))

    def label_count(self) -> int:
        root = self._svg_root()
        return sum(1 for el in root.iter() if el.get("class") == "label")

    def polylines(self) -> list[list[tuple[float, float]]]:
        root = self._svg_root()
        lines = []
        for el in root.iter():
            if el.get("class") == "route":
                pts = [tuple(map(float, p.split(",")))
                       for p in el.get("points").split()]
                lines.append(pts)
        return lines

    def polyline_count(self) -> int:
        return len(self.polylines())

    def save(self, basepath) -> None:
        """Write <basepath>.png and <basepath>.svg."""
        from pathlib import Path

        base = Path(basepath)
        base.with_suffix(".png").write_bytes(self.png)
        base.with_suffix(".svg").write_text(self.svg)


def _transform(instance: Instance, spec: RenderSpec):
    """Single aspect-preserving affine from data space to panel pixels."""
    xs = [instance.depot[0]] + [c.x for c in instance.customers]
    ys = [instance.depot[1]] + [c.y for c in instance.customers]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    # unit-extent fallback keeps coincident points renderable
    ext_x = (x1 - x0) or 1.0
    ext_y = (y1 - y0) or 1.0
    margin = spec.panel_size * spec.margin_frac
    avail = spec.panel_size - 2 * margin
    scale = min(avail / ext_x, avail / ext_y)
    off_x = margin + (avail - scale * ext_x) / 2
    off_y = margin + (avail - scale * ext_y) / 2

    def to_px(x, y):
        px = off_x + (x - x0) * scale
        py = spec.panel_size - (off_y + (y - y0) * scale)  # y grows upward in data
        return (round(px, 2), round(py, 2))

    return to_px


def _scene(instance: Instance, solution: Solution | None, spec: RenderSpec):
    """Build the drawing-op list shared by the PNG and SVG writers."""
    n = instance.n_customers + 1
    to_px = _transform(instance, spec)
    font = spec.font_size(n)
    radius = spec.marker_radius(n)

    ops = []
    if solution is not None:
        for ri, route in enumerate(solution.routes):
            pts = [to_px(*instance.depot)]
            for cid in route:
                c = instance.customer(cid)
                pts.append(to_px(c.x, c.y))
            pts.append(to_px(*instance.depot))
            ops.append(("polyline", ri, spec.palette[ri % len(spec.palette)], pts))

    vertices = [("depot", "D", instance.depot)]
    vertices += [("customer", str(c.id), (c.x, c.y)) for c in instance.customers]
    # labels nudge in reading order so dense instances stay legible
    placed: list[tuple[float, float, float, float]] = []
    for kind, text, (x, y) in sorted(vertices, key=lambda v: to_px(*v[2])[::-1]):
        px, py = to_px(x, y)
        ops.append(("marker", kind, (px, py), radius))
        w, h = font * 0.62 * len(text), font
        lx, ly = px + radius + 2, py - radius - h
        for _ in range(24):
            box = (lx, ly, lx + w, ly + h)
            if not any(box[0] < b[2] and box[2] > b[0] and box[1] < b[3] and box[3] > b[1]
                       for b in placed):
                break
            ly += 3
        placed.append((lx, ly, lx + w, ly + h))
        ops.append(("label", text, (lx, ly), font))
    return ops


def _raster(ops_by_panel, spec: RenderSpec, panel_labels=None) -> bytes:
    panels = len(ops_by_panel)
    width = panels * spec.panel_size + (panels - 1) * spec.gutter
    img = Image.new("RGB", (width, spec.panel_size), "white")
    draw = ImageDraw.Draw(img)
    fonts: dict[int, ImageFont.FreeTypeFont] = {}

    def get_font(size):
        if size not in fonts:
            fonts[size] = ImageFont.load_default(size=size)
        return fonts[size]

    for pi, ops in enumerate(ops_by_panel):
        dx = pi * (spec.panel_size + spec.gutter)
        if panel_labels:
            draw.text((dx + 8, 4), panel_labels[pi], fill="black",
                      font=get_font(int(spec.base_font * 1.8)))
        for op in ops:
            if op[0] == "polyline":
                _, _, color, pts = op
                draw.line([(x + dx, y) for x, y in pts], fill=color, width=2)
            elif op[0] == "marker":
                _, kind, (x, y), r = op
                x += dx
                if kind == "depot":
                    draw.rectangle((x - r - 1, y - r - 1, x + r + 1, y + r + 1),
                                   fill="black")
                else:
                    draw.ellipse((x - r, y - r, x + r, y + r),
                                 fill="white", outline="black", width=2)
            elif op[0] == "label":
                _, text, (x, y), size = op
                draw.text((x + dx, y), text, fill="black", font=get_font(size))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _svg(ops_by_panel, spec: RenderSpec, panel_labels=None) -> str:
    panels = len(ops_by_panel)
    width = panels * spec.panel_size + (panels - 1) * spec.gutter
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{spec.panel_size}">']
    for pi, ops in enumerate(ops_by_panel):
        dx = pi * (spec.panel_size + spec.gutter)
        out.append(f'<g class="panel" data-panel="{pi}">')
        if panel_labels:
            out.append(f'<text class="panel-label" x="{dx + 8}" y="{spec.base_font * 2}">'
                       f"{panel_labels[pi]}</text>")
        for op in ops:
            if op[0] == "polyline":
                _, ri, color, pts = op
                points = " ".join(f"{x + dx},{y}" for x, y in pts)
                rgb = f"rgb({color[0]},{color[1]},{color[2]})"
                out.append(f'<polyline class="route" data-route="{ri}" '
                           f'points="{points}" fill="none" stroke="{rgb}"/>')
            elif op[0] == "marker":
                _, kind, (x, y), r = op
                if kind == "depot":
                    out.append(f'<rect class="marker depot" x="{x + dx - r}" '
                               f'y="{y - r}" width="{2 * r}" height="{2 * r}"/>')
                else:
                    out.append(f'<circle class="marker customer" cx="{x + dx}" '
                               f'cy="{y}" r="{r}"/>')
            elif op[0] == "label":
                _, text, (x, y), size = op
                out.append(f'<text class="label" x="{x + dx}" y="{y + size}" '
                           f'font-size="{size}">{text}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out)


def render_layout(instance: Instance, spec: RenderSpec = RenderSpec()) -> Rendered:
    """Sub-figure A: every vertex drawn and labeled, no routes."""
    ops = _scene(instance, None, spec)
    return Rendered(png=_raster([ops], spec), svg=_svg([ops], spec))


def render_routes(instance: Instance, solution: Solution,
                  spec: RenderSpec = RenderSpec()) -> Rendered:
    """Sub-figure B: the layout plus one colored polyline per route."""
    ops = _scene(instance, solution, spec)
    return Rendered(png=_raster([ops], spec), svg=_svg([ops], spec))


def render_pair(instance: Instance, solution: Solution,
                spec: RenderSpec = RenderSpec()) -> Rendered:
    """Side-by-side composite: "A" layout on the left, "B" routes right."""
    a = _scene(instance, None, spec)
    b = _scene(instance, solution, spec)
    return Rendered(png=_raster([a, b], spec, panel_labels=("A", "B")),
                    svg=_svg([a, b], spec, panel_labels=("A", "B")))
