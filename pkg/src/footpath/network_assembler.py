"""Stitch per-tile polygons into one footpath layer.

Polygon coordinates are snapped onto the global pixel-corner lattice of
their zoom, shared opposite-direction unit edges cancel, and the remaining
edges re-chain into rings.  The union is therefore exact (pure integer
arithmetic): tile seams vanish without a robust-geometry dependency.
Polygons touching only at a corner stay separate (4-connectivity rule).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import DomainError, GeometryError
from .geo_tiles import (
    TILE_SIZE,
    TileId,
    global_pixel_to_latlon,
    ground_resolution,
    ring_to_tile_pixels,
)
from .geometry import GeoPolygon, Ring
from .vectorizer import simplify

_SNAP_LIMIT = 0.5  # px; farther-off coordinates are not lattice geometry


@dataclass
class Feature:
    """One dissolved footpath polygon with provenance and measured area."""

    polygon: GeoPolygon
    tiles: list  # sorted contributing TileIds
    area_m2: float


@dataclass
class FeatureCollection:
    """Deterministically ordered, interior-disjoint polygon layer."""

    features: list = field(default_factory=list)
    zoom: int | None = None


def dissolve(polys: list, snap_grid: int) -> list:
    """Merge lattice polygons that share at least one unit edge.

    ``snap_grid`` is the zoom whose pixel-corner lattice the coordinates
    sit on (within half a pixel).  Corner-only contact never merges.
    """
    lattice = [_snap_polygon(p, snap_grid) for p in polys]
    groups = _dissolve_lattice(lattice)
    out = []
    for rings, _members in groups:
        out.extend(_rings_to_polygons(rings, snap_grid))
    return out


def merge_tiles(per_tile: dict) -> FeatureCollection:
    """Union per-tile polygons across seams into a FeatureCollection.

    Features are ordered by (min-y, min-x) of their contributing tiles;
    every feature carries its source tiles and area in square meters.
    """
    zooms = {t.z for t in per_tile}
    if len(zooms) > 1:
        raise DomainError(f"tiles span multiple zooms: {sorted(zooms)}")
    if not per_tile:
        return FeatureCollection(features=[], zoom=None)
    zoom = zooms.pop()

    sources: list[TileId] = []
    lattice = []
    for tile in sorted(per_tile, key=lambda t: (t.y, t.x)):
        for poly in per_tile[tile]:
            sources.append(tile)
            lattice.append(_snap_polygon(poly, zoom))

    features = []
    for rings, members in _dissolve_lattice(lattice):
        tiles = sorted({sources[m] for m in members}, key=lambda t: (t.y, t.x))
        for poly in _rings_to_polygons(rings, zoom):
            features.append(
                Feature(polygon=poly, tiles=tiles, area_m2=polygon_area_m2(poly, zoom))
            )
    features.sort(key=_feature_sort_key)
    return FeatureCollection(features=features, zoom=zoom)


def simplify_collection(fc: FeatureCollection, tol_px: float) -> FeatureCollection:
    """Simplify every feature ring in pixel space; areas are recomputed."""
    if tol_px <= 0 or not fc.features:
        return fc
    out = []
    for f in fc.features:
        frame = f.tiles[0]
        poly = GeoPolygon(
            exterior=simplify(f.polygon.exterior, tol_px, frame),
            holes=[simplify(h, tol_px, frame) for h in f.polygon.holes],
        )
        out.append(
            Feature(polygon=poly, tiles=f.tiles, area_m2=polygon_area_m2(poly, fc.zoom))
        )
    return FeatureCollection(features=out, zoom=fc.zoom)


def polygon_area_m2(poly: GeoPolygon, zoom: int) -> float:
    """Polygon area in m^2: pixel-space shoelace times ground resolution^2.

    The local ground resolution at the exterior's centroid is adequate at
    city scale (z=21 tiles span ~1e-4 degrees).
    """
    frame = TileId(x=0, y=0, z=zoom)
    area_px = 0.0
    for ring, sign in [(poly.exterior, 1.0)] + [(h, -1.0) for h in poly.holes]:
        px, py = ring_to_tile_pixels(ring, frame)
        # translate to a local origin: global pixel coords are ~1e8 at high
        # zooms and the raw shoelace would cancel catastrophically
        px = px - np.floor(px.min())
        py = py - np.floor(py.min())
        area_px += sign * abs(
            0.5 * float(np.sum(px[:-1] * py[1:] - px[1:] * py[:-1]))
        )
    _, lat = geometry.ring_centroid(poly.exterior)
    res = ground_resolution(lat, zoom)
    return area_px * res * res


def _feature_sort_key(f: Feature):
    t0 = f.tiles[0]
    ring = f.polygon.exterior
    return (t0.y, t0.x, min((p[1], p[0]) for p in ring))


def _snap_polygon(poly: GeoPolygon, zoom: int) -> list:
    """Snap rings onto the global integer corner lattice, px orientation.

    Exterior rings become clockwise on screen (positive shoelace in the
    y-down pixel frame), holes the opposite, so every directed edge has
    polygon interior on its right.  Degenerate snapped rings are dropped.
    """
    frame = TileId(x=0, y=0, z=zoom)
    out = []
    for ring, is_exterior in [(poly.exterior, True)] + [(h, False) for h in poly.holes]:
        px, py = ring_to_tile_pixels(ring, frame)
        ix = np.rint(px)
        iy = np.rint(py)
        off = max(float(np.max(np.abs(px - ix))), float(np.max(np.abs(py - iy))))
        if off > _SNAP_LIMIT:
            raise GeometryError(
                f"coordinates are {off:.3f} px off the zoom-{zoom} corner lattice"
            )
        snapped = list(zip(ix.astype(np.int64).tolist(), iy.astype(np.int64).tolist()))[:-1]
        # drop only consecutive duplicates (snap collapse); a ring may
        # legitimately revisit a pinch vertex
        pts = [p for k, p in enumerate(snapped) if p != snapped[k - 1]]
        if len(pts) < 3:
            continue
        if _shoelace2_int(pts) == 0:
            continue
        if (_shoelace2_int(pts) > 0) != is_exterior:
            pts.reverse()
        out.append(pts)
    return out


def _shoelace2_int(pts: list) -> int:
    s = 0
    n = len(pts)
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        s += x1 * y2 - x2 * y1
    return s


def _unit_edges(pts: list):
    """Decompose an axis-aligned lattice ring into directed unit edges."""
    n = len(pts)
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        if x1 != x2 and y1 != y2:
            raise GeometryError(
                f"dissolve requires axis-aligned lattice segments, got "
                f"({x1},{y1})-({x2},{y2})"
            )
        dx = (x2 > x1) - (x2 < x1)
        dy = (y2 > y1) - (y2 < y1)
        x, y = x1, y1
        while (x, y) != (x2, y2):
            yield (x, y), (x + dx, y + dy)
            x, y = x + dx, y + dy


def _dissolve_lattice(lattice_polys: list):
    """Edge-cancellation union over snapped polygons.

    Returns a list of groups, each (rings, member_indices): rings are the
    chained corner rings of one edge-connected union, members the input
    polygon indices merged into it.
    """
    parent = list(range(len(lattice_polys)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    edges: dict = {}  # (a, b) -> source polygon index
    for idx, rings in enumerate(lattice_polys):
        for pts in rings:
            for a, b in _unit_edges(pts):
                if (b, a) in edges:
                    union(idx, edges.pop((b, a)))
                elif (a, b) in edges:
                    raise GeometryError(
                        f"overlapping polygon interiors share directed edge {a}-{b}"
                    )
                else:
                    edges[(a, b)] = idx

    out_dirs: dict = {}
    edge_src: dict = {}
    for (a, b), idx in edges.items():
        d = (b[0] - a[0], b[1] - a[1])
        out_dirs.setdefault(a, []).append(d)
        edge_src[(a, d)] = idx

    group_rings: dict = {}
    group_members: dict = {}
    for idx in range(len(lattice_polys)):
        g = find(idx)
        group_members.setdefault(g, set()).add(idx)

    used: set = set()
    for v0 in sorted(out_dirs):
        for d0 in out_dirs[v0]:
            if (v0, d0) in used:
                continue
            ring = []
            v, d = v0, d0
            src = edge_src[(v0, d0)]
            while True:
                used.add((v, d))
                ring.append(v)
                v = (v[0] + d[0], v[1] + d[1])
                dirs = out_dirs[v]
                if len(dirs) == 1:
                    d = dirs[0]
                else:
                    d = (-d[1], d[0])  # right turn: corner contact stays apart
                if v == v0 and d == d0:
                    break
            g = find(src)
            group_rings.setdefault(g, []).append(_canonical_ring(_merge_collinear(ring)))

    return [
        (group_rings[g], sorted(group_members[g]))
        for g in sorted(group_rings)
    ]


def _merge_collinear(ring: list) -> list:
    n = len(ring)
    out = []
    for k in range(n):
        xp, yp = ring[k - 1]
        xc, yc = ring[k]
        xn, yn = ring[(k + 1) % n]
        if (xc - xp, yc - yp) != (xn - xc, yn - yc):
            out.append(ring[k])
    return out


def _canonical_ring(ring: list) -> list:
    k = min(range(len(ring)), key=lambda i: (ring[i][1], ring[i][0]))
    return ring[k:] + ring[:k]


def _rings_to_polygons(rings: list, zoom: int) -> list:
    """Group one union's rings into polygons (exterior + contained holes)."""
    outers = [r for r in rings if _shoelace2_int(r) > 0]
    holes = [r for r in rings if _shoelace2_int(r) < 0]
    outers.sort(key=lambda r: (r[0][1], r[0][0]))
    hole_map: dict = {i: [] for i in range(len(outers))}
    for h in holes:
        vx, vy = h[0]
        px, py = vx + 0.5, vy + 0.5  # strictly inside the hole
        best = None
        best_area = None
        for i, o in enumerate(outers):
            if _point_in_lattice_ring(px, py, o):
                a = abs(_shoelace2_int(o))
                if best_area is None or a < best_area:
                    best, best_area = i, a
        if best is not None:
            hole_map[best].append(h)
    polys = []
    for i, o in enumerate(outers):
        exterior = _lattice_ring_to_geo(o, zoom)
        hole_rings = [
            _lattice_ring_to_geo(h, zoom)
            for h in sorted(hole_map[i], key=lambda r: (r[0][1], r[0][0]))
        ]
        polys.append(GeoPolygon(exterior=exterior, holes=hole_rings).normalized())
    return polys


def _point_in_lattice_ring(x: float, y: float, ring: list) -> bool:
    inside = False
    n = len(ring)
    for k in range(n):
        x1, y1 = ring[k]
        x2, y2 = ring[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def _lattice_ring_to_geo(ring: list, zoom: int) -> Ring:
    pts = []
    for gx, gy in ring:
        g = global_pixel_to_latlon(float(gx), float(gy), zoom)
        pts.append((g.lon, g.lat))
    pts.append(pts[0])
    return pts


def write_geojson(fc: FeatureCollection, path: Path | str, ndjson: bool = False) -> int:
    """Serialize to RFC 7946 GeoJSON; returns bytes written.

    Output is byte-stable: fixed key order, fixed feature order, lon/lat
    printed with 9 decimal places.  ``ndjson`` writes one feature per line
    for streaming consumers.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if ndjson:
        payload = "".join(_feature_json(f) + "\n" for f in fc.features)
    else:
        body = ",\n".join(_feature_json(f) for f in fc.features)
        payload = (
            '{"type":"FeatureCollection","features":[' + ("\n" + body + "\n" if body else "") + "]}\n"
        )
    data = payload.encode("utf-8")
    path.write_bytes(data)
    return len(data)


def _feature_json(f: Feature) -> str:
    tiles = json.dumps([f"{t.z}/{t.x}/{t.y}" for t in f.tiles], separators=(",", ":"))
    rings = [f.polygon.exterior] + list(f.polygon.holes)
    coords = (
        "["
        + ",".join(
            "[" + ",".join(f"[{x:.9f},{y:.9f}]" for x, y in ring) + "]" for ring in rings
        )
        + "]"
    )
    return (
        '{"type":"Feature","properties":{"area_m2":%.3f,"tiles":%s},'
        '"geometry":{"type":"Polygon","coordinates":%s}}' % (f.area_m2, tiles, coords)
    )


def read_geojson(path: Path | str) -> FeatureCollection:
    """Parse a FeatureCollection written by :func:`write_geojson`."""
    doc = json.loads(Path(path).read_text())
    features = []
    for feat in doc.get("features", []):
        rings = [
            [(float(x), float(y)) for x, y in ring]
            for ring in feat["geometry"]["coordinates"]
        ]
        props = feat.get("properties") or {}
        tiles = []
        for zxy in props.get("tiles", []):
            z, x, y = (int(v) for v in zxy.split("/"))
            tiles.append(TileId(x=x, y=y, z=z))
        features.append(
            Feature(
                polygon=GeoPolygon(exterior=rings[0], holes=rings[1:]),
                tiles=tiles,
                area_m2=float(props.get("area_m2", 0.0)),
            )
        )
    zoom = None
    for f in features:
        if f.tiles:
            zoom = f.tiles[0].z
            break
    return FeatureCollection(features=features, zoom=zoom)
