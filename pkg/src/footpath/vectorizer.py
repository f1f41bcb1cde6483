"""Binary masks to georeferenced polygons.

Contours are traced along pixel boundaries (crack following on the corner
lattice), so filling the extracted rings reproduces the mask exactly and
the rasterize/vectorize round trip is bit-for-bit.  Foreground is
8-connected, background 4-connected.

Pipeline per tile: extract_contours -> contour_to_geo -> simplify.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DomainError, GeometryError
from .geo_tiles import TILE_SIZE, TileId, global_pixel_to_latlon, ring_to_tile_pixels
from .geometry import GeoPolygon, Ring, _ring_self_intersects

# pixel-space slack treated as collinear: absorbs the geo->pixel round-trip
# float noise (~5e-8 px at z=21) while staying far below any pixel feature
_COLLINEAR_EPS = 1e-6

_STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass
class PixelContour:
    """Closed lattice ring on the pixel-corner grid (closure implicit).

    Outer rings carry positive shoelace in (px, py); holes negative.
    ``parent`` indexes the enclosing outer contour for holes.
    """

    ring: list  # [(x, y)] integer corners
    kind: str  # "outer" | "hole"
    parent: Optional[int] = None


def extract_contours(mask: np.ndarray) -> list:
    """Trace boundary contours of ``mask`` with hole hierarchy.

    Filling every outer ring and subtracting its holes reproduces the
    mask exactly.  Total function: empty masks yield an empty list.
    """
    mask = np.asarray(mask, dtype=bool)
    rings = _trace_rings(mask)
    if not rings:
        return []
    labels, _ = ndimage.label(mask, structure=_STRUCT8)
    outers: dict[int, list] = {}
    holes: dict[int, list] = {}
    for ring in rings:
        x0, y0 = ring[0]  # canonical start: topmost, then leftmost corner
        if _shoelace2(ring) > 0:
            outers[int(labels[y0, x0])] = ring
        else:
            holes.setdefault(int(labels[y0 - 1, x0]), []).append(ring)
    out: list[PixelContour] = []
    for label in sorted(outers, key=lambda l: (outers[l][0][1], outers[l][0][0])):
        parent_idx = len(out)
        out.append(PixelContour(ring=outers[label], kind="outer"))
        for hole in sorted(holes.get(label, []), key=lambda r: (r[0][1], r[0][0])):
            out.append(PixelContour(ring=hole, kind="hole", parent=parent_idx))
    return out


def _trace_rings(mask: np.ndarray) -> list:
    """Chain directed boundary cracks into closed corner-lattice rings.

    Cracks are directed with foreground on the right of travel (y down).
    At ambiguous corners (diagonal foreground) the walk turns left, which
    joins 8-connected foreground and keeps 4-connected background apart.
    """
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    above = padded[:-1, 1:-1]  # pixel north of horizontal crack (j, i)
    below = padded[1:, 1:-1]
    left = padded[1:-1, :-1]  # pixel west of vertical crack (j, i)
    right = padded[1:-1, 1:]

    out_dirs: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(xs: np.ndarray, ys: np.ndarray, d: tuple[int, int]) -> None:
        for x, y in zip(xs.tolist(), ys.tolist()):
            out_dirs.setdefault((x, y), []).append(d)

    js, xs = np.nonzero(below & ~above)  # fg below: travel east along y=j
    add(xs, js, (1, 0))
    js, xs = np.nonzero(above & ~below)  # fg above: travel west
    add(xs + 1, js, (-1, 0))
    js, xs = np.nonzero(left & ~right)  # fg west: travel south along x=i
    add(xs, js, (0, 1))
    js, xs = np.nonzero(right & ~left)  # fg east: travel north
    add(xs, js + 1, (0, -1))

    rings = []
    used: set = set()
    for v0 in sorted(out_dirs):
        for d0 in out_dirs[v0]:
            if (v0, d0) in used:
                continue
            ring = []
            v, d = v0, d0
            while True:
                used.add((v, d))
                ring.append(v)
                v = (v[0] + d[0], v[1] + d[1])
                dirs = out_dirs[v]
                if len(dirs) == 1:
                    d = dirs[0]
                else:
                    d = (d[1], -d[0])  # left turn at ambiguous corner
                if v == v0 and d == d0:
                    break
            rings.append(_canonical(_corners(ring)))
    return rings


def _corners(ring: list) -> list:
    """Drop unit-step vertices where the walk direction does not change."""
    n = len(ring)
    out = []
    for k in range(n):
        xp, yp = ring[k - 1]
        xc, yc = ring[k]
        xn, yn = ring[(k + 1) % n]
        if (xc - xp, yc - yp) != (xn - xc, yn - yc):
            out.append(ring[k])
    return out


def _canonical(ring: list) -> list:
    """Rotate so the ring starts at its topmost-then-leftmost corner."""
    k = min(range(len(ring)), key=lambda i: (ring[i][1], ring[i][0]))
    return ring[k:] + ring[:k]


def _shoelace2(ring: list) -> int:
    s = 0
    n = len(ring)
    for k in range(n):
        x1, y1 = ring[k]
        x2, y2 = ring[(k + 1) % n]
        s += x1 * y2 - x2 * y1
    return s


def contour_to_geo(c: PixelContour, t: TileId) -> Ring:
    """Map lattice corners to a closed (lon, lat) ring via the tile frame.

    Corner (i, j) maps through the global-pixel inverse at (x*256+i,
    y*256+j); the corner grid is closed, so 256 is a valid coordinate.
    """
    base_x = t.x * TILE_SIZE
    base_y = t.y * TILE_SIZE
    pts = []
    for i, j in c.ring:
        g = global_pixel_to_latlon(base_x + i, base_y + j, t.z)
        pts.append((g.lon, g.lat))
    pts.append(pts[0])
    return pts


def simplify(ring: Ring, tol_px: float, t: TileId) -> Ring:
    """Douglas-Peucker in pixel space with max deviation ``tol_px``.

    tol_px=0 removes collinear points only.  The result stays closed with
    at least 4 points; if simplification would self-intersect, the input
    ring is returned unchanged.
    """
    if tol_px < 0:
        raise DomainError(f"tol_px must be non-negative, got {tol_px}")
    if len(ring) < 4 or ring[0] != ring[-1]:
        raise GeometryError("simplify requires a closed ring of at least 4 points")
    pts = ring[:-1]
    if len(pts) == 3:
        return list(ring)
    px, py = ring_to_tile_pixels(pts, t)
    sel = _dp_select(px, py, max(tol_px, _COLLINEAR_EPS))
    if len(sel) < 3:
        return list(ring)
    simplified = [pts[i] for i in sel]
    simplified.append(simplified[0])
    if _ring_self_intersects(simplified):
        return list(ring)
    return simplified


def _dp_select(x: np.ndarray, y: np.ndarray, tol: float) -> list:
    """Indices kept by Douglas-Peucker over a closed ring (open arrays).

    The ring is anchored at vertex 0 and its farthest vertex, then each
    open chain is simplified against segment (not line) distance so every
    dropped vertex is within ``tol`` of the retained polyline.
    """
    n = len(x)
    ex = np.append(x, x[0])
    ey = np.append(y, y[0])
    d0 = (x - x[0]) ** 2 + (y - y[0]) ** 2
    far = int(np.argmax(d0))
    if d0[far] == 0.0:
        return [0]
    keep = np.zeros(n + 1, dtype=bool)
    keep[0] = keep[far] = keep[n] = True
    stack = [(0, far), (far, n)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        d = _segment_distance(ex[a + 1 : b], ey[a + 1 : b], ex[a], ey[a], ex[b], ey[b])
        k = int(np.argmax(d))
        if d[k] > tol:
            keep[a + 1 + k] = True
            stack.append((a, a + 1 + k))
            stack.append((a + 1 + k, b))
    return [i for i in range(n) if keep[i]]


def _segment_distance(
    xs: np.ndarray, ys: np.ndarray, ax: float, ay: float, bx: float, by: float
) -> np.ndarray:
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return np.hypot(xs - ax, ys - ay)
    tpar = np.clip(((xs - ax) * dx + (ys - ay) * dy) / l2, 0.0, 1.0)
    return np.hypot(xs - (ax + tpar * dx), ys - (ay + tpar * dy))


def vectorize_tile(mask: np.ndarray, t: TileId, tol_px: float = 0.0) -> list:
    """Masks to polygons: contours, geo coordinates, optional simplification.

    With tol_px=0 the output rasterizes back to ``mask`` bit-for-bit.
    """
    contours = extract_contours(mask)
    polys: list[GeoPolygon] = []
    index_of: dict[int, int] = {}
    for i, c in enumerate(contours):
        ring = contour_to_geo(c, t)
        if c.kind == "outer":
            index_of[i] = len(polys)
            polys.append(GeoPolygon(exterior=ring, holes=[]))
        else:
            polys[index_of[c.parent]].holes.append(ring)
    polys = [p.normalized() for p in polys]
    if tol_px > 0:
        polys = [
            GeoPolygon(
                exterior=simplify(p.exterior, tol_px, t),
                holes=[simplify(h, tol_px, t) for h in p.holes],
            )
            for p in polys
        ]
    return polys
