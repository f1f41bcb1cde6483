"""Polygon primitives shared by the dataset builder, vectorizer and assembler.

Rings are lists of (lon, lat) float pairs in GeoJSON axis order, explicitly
closed (first vertex == last vertex).  Exterior rings are counterclockwise
(positive shoelace over lon/lat), holes clockwise, matching RFC 7946.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import GeometryError

Ring = list  # list[tuple[float, float]], closed

# clipping slivers below this area (square degrees) are floating-point noise
SLIVER_AREA = 1e-12


@dataclass
class GeoPolygon:
    """Georeferenced polygon: one exterior ring plus zero or more holes."""

    exterior: Ring
    holes: list = field(default_factory=list)

    def normalized(self) -> "GeoPolygon":
        """Copy with exterior CCW and holes CW (lon/lat shoelace signs)."""
        ext = orient_ring(self.exterior, ccw=True)
        holes = [orient_ring(h, ccw=False) for h in self.holes]
        return GeoPolygon(exterior=ext, holes=holes)

    def area(self) -> float:
        """Net unsigned area in square degrees (exterior minus holes)."""
        a = abs(ring_area(self.exterior))
        for h in self.holes:
            a -= abs(ring_area(h))
        return a


def ring_area(ring: Ring) -> float:
    """Signed shoelace area of a closed ring (positive = CCW in lon/lat).

    Computed relative to the first vertex so tiny tile-scale rings are not
    swamped by floating-point cancellation.
    """
    x0, y0 = ring[0]
    area = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        area += (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    return 0.5 * area


def orient_ring(ring: Ring, ccw: bool) -> Ring:
    """Return ``ring`` traversed in the requested direction."""
    if (ring_area(ring) > 0.0) == ccw:
        return list(ring)
    return list(reversed(ring))


def ring_bounds(ring: Ring) -> tuple[float, float, float, float]:
    """(min lon, min lat, max lon, max lat) of the ring's vertices."""
    xs = [p[0] for p in ring]
    ys = [p[1] for p in ring]
    return min(xs), min(ys), max(xs), max(ys)


def ring_centroid(ring: Ring) -> tuple[float, float]:
    """Area centroid of a closed ring; vertex mean for degenerate rings.

    Computed relative to the first vertex: tile-scale rings have spans
    around 1e-4 degrees and the raw cross products would cancel badly.
    """
    x0, y0 = ring[0]
    a2 = 0.0
    cx = cy = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        x1, y1, x2, y2 = x1 - x0, y1 - y0, x2 - x0, y2 - y0
        cross = x1 * y2 - x2 * y1
        a2 += cross
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    if a2 == 0.0:
        pts = ring[:-1] or ring
        return sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts)
    return x0 + cx / (3.0 * a2), y0 + cy / (3.0 * a2)


def point_in_ring(x: float, y: float, ring: Ring) -> bool:
    """Even-odd rule: crossings of the +x ray from (x, y), half-open in y."""
    inside = False
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def point_in_polygon(x: float, y: float, poly: GeoPolygon) -> bool:
    """Even-odd membership across the exterior and all hole rings."""
    inside = point_in_ring(x, y, poly.exterior)
    for h in poly.holes:
        if point_in_ring(x, y, h):
            inside = not inside
    return inside


def validate_ring(ring: Ring) -> None:
    """Raise GeometryError for open, undersized or self-intersecting rings."""
    if len(ring) < 4:
        raise GeometryError(f"ring has {len(ring)} points, need at least 4 (closed)")
    if ring[0] != ring[-1]:
        raise GeometryError(f"ring is not closed: {ring[0]} != {ring[-1]}")
    if _ring_self_intersects(ring):
        raise GeometryError("ring is self-intersecting")


def _segments_touch(a, b, c, d) -> bool:
    """True when segments ab and cd share any point."""

    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if v > 0.0:
            return 1
        if v < 0.0:
            return -1
        return 0

    def on_segment(p, q, r):
        return (
            min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
        )

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(a, b, c):
        return True
    if o2 == 0 and on_segment(a, b, d):
        return True
    if o3 == 0 and on_segment(c, d, a):
        return True
    if o4 == 0 and on_segment(c, d, b):
        return True
    return False


def _ring_self_intersects(ring: Ring) -> bool:
    """O(n^2) check: any contact between non-adjacent edges of the ring."""
    n = len(ring) - 1
    for i in range(n):
        a, b = ring[i], ring[i + 1]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            c, d = ring[j], ring[j + 1]
            if _segments_touch(a, b, c, d):
                return True
    return False
