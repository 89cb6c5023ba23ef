"""Minimal standalone SVG writer: circles, polygons, and polylines only.

Coordinates are in tank units (the unit disk plus a small margin); the
writer flips the y axis so that plots read in the usual math orientation.
"""

from __future__ import annotations

VIEW_HALF = 1.6   # world half-extent mapped onto the canvas
CANVAS = 480      # pixel size of the square canvas


def _map(pt) -> tuple[float, float]:
    s = CANVAS / (2 * VIEW_HALF)
    return (pt[0] + VIEW_HALF) * s, (VIEW_HALF - pt[1]) * s


class SvgCanvas:
    def __init__(self):
        self._parts: list[str] = []

    def circle(self, center, radius, stroke="black", width=1.5, dash=None):
        cx, cy = _map(center)
        r = radius * CANVAS / (2 * VIEW_HALF)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def polygon(self, points, stroke="black", width=1.5, dash=None, fill="none"):
        if len(points) == 0:
            return
        coords = " ".join("%.2f,%.2f" % _map(p) for p in points)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<polygon points="{coords}" fill="{fill}" stroke="{stroke}" '
            f'stroke-width="{width}"{extra}/>'
        )

    def polyline(self, points, stroke="black", width=1.5, dash=None):
        if len(points) == 0:
            return
        coords = " ".join("%.2f,%.2f" % _map(p) for p in points)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"{extra}/>'
        )

    def write(self, path) -> None:
        body = "\n".join(self._parts)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" '
                f'height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">\n{body}\n</svg>\n'
            )


def hull_comparison_svg(path, truth, learned, ls_hull) -> None:
    """Unit disk with the true (solid), learned (dashed), and least-squares
    (dotted) hull outlines."""
    svg = SvgCanvas()
    svg.circle((0.0, 0.0), 1.0, stroke="#808080", width=1.0)
    svg.polygon(ls_hull, stroke="#cc3333", width=1.5, dash="2 3")
    svg.polygon(learned, stroke="#2255cc", width=1.5, dash="7 4")
    svg.polygon(truth, stroke="black", width=1.8)
    svg.write(path)
