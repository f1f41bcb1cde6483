"""Ground-truth mask tiles from a vector footpath network.

The network (GeoJSON polygons, EPSG:4326) is clipped tile by tile and
rasterized into 256x256 binary masks: a pixel is foreground iff its center
lies inside a polygon by the even-odd rule.  Splits are seeded and
deterministic.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import DomainError, GeometryError, MissingInputError
from .geo_tiles import TILE_SIZE, BBox, TileId, ring_to_tile_pixels, tile_to_bbox
from .geometry import GeoPolygon, Ring
from .mask_io import mask_path, write_mask


@dataclass
class VectorNetwork:
    """Validated polygon layer loaded from GeoJSON."""

    polygons: list = field(default_factory=list)


def load_network(path: Path | str) -> VectorNetwork:
    """Parse and validate a GeoJSON FeatureCollection of (Multi)Polygons.

    Rings must be closed and free of self-intersections; orientation is
    normalized (exterior CCW, holes CW) rather than rejected.
    """
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"network file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise GeometryError(f"expected FeatureCollection, got {doc.get('type')!r}")
    polygons = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            coord_sets = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            coord_sets = geom["coordinates"]
        else:
            raise GeometryError(f"unsupported geometry type {gtype!r}")
        for rings in coord_sets:
            parsed = [_parse_ring(r) for r in rings]
            for ring in parsed:
                geometry.validate_ring(ring)
            poly = GeoPolygon(exterior=parsed[0], holes=parsed[1:]).normalized()
            polygons.append(poly)
    return VectorNetwork(polygons=polygons)


def _parse_ring(coords) -> Ring:
    return [(float(c[0]), float(c[1])) for c in coords]


def clip_polygon_to_bbox(poly: GeoPolygon, bbox: BBox) -> list:
    """Clip ``poly`` to a rectangular bbox (Sutherland-Hodgman per ring).

    Hole rings are clipped independently and re-associated by containment.
    Slivers below 1e-12 square degrees are dropped as clipping noise.
    Returns an empty list when the polygon misses the bbox entirely.
    """
    for ring in [poly.exterior, *poly.holes]:
        geometry.validate_ring(ring)
    ext = _clip_ring(poly.exterior, bbox)
    if ext is None or abs(geometry.ring_area(ext)) < geometry.SLIVER_AREA:
        return []
    holes = []
    for hole in poly.holes:
        clipped = _clip_ring(hole, bbox)
        if clipped is None or abs(geometry.ring_area(clipped)) < geometry.SLIVER_AREA:
            continue
        if _ring_inside(clipped, ext):
            holes.append(clipped)
    return [GeoPolygon(exterior=ext, holes=holes).normalized()]


def _clip_ring(ring: Ring, bbox: BBox):
    """Sutherland-Hodgman against the four bbox half-planes; None if empty."""
    pts = ring[:-1]
    for inside, intersect in (
        (lambda p: p[0] >= bbox.west, lambda a, b: _cross_x(a, b, bbox.west)),
        (lambda p: p[0] <= bbox.east, lambda a, b: _cross_x(a, b, bbox.east)),
        (lambda p: p[1] >= bbox.south, lambda a, b: _cross_y(a, b, bbox.south)),
        (lambda p: p[1] <= bbox.north, lambda a, b: _cross_y(a, b, bbox.north)),
    ):
        if not pts:
            return None
        out = []
        prev = pts[-1]
        prev_in = inside(prev)
        for cur in pts:
            cur_in = inside(cur)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
            prev, prev_in = cur, cur_in
        pts = out
    if len(pts) < 3:
        return None
    return pts + [pts[0]]


def _cross_x(a, b, x: float):
    t = (x - a[0]) / (b[0] - a[0])
    return (x, a[1] + t * (b[1] - a[1]))


def _cross_y(a, b, y: float):
    t = (y - a[1]) / (b[1] - a[1])
    return (a[0] + t * (b[0] - a[0]), y)


def _ring_inside(hole: Ring, exterior: Ring) -> bool:
    """Containment test tolerant of vertices lying on the exterior boundary."""
    candidates = [geometry.ring_centroid(hole)] + hole[:-1]
    return any(geometry.point_in_ring(x, y, exterior) for x, y in candidates)


def rasterize(polys: list, t: TileId, side: int = TILE_SIZE) -> np.ndarray:
    """Rasterize polygons onto tile ``t``: 256x256 bool, pixel-center even-odd.

    Pixel (row j, col i) is foreground iff the lat/lon of pixel center
    (i+0.5, j+0.5) falls inside any polygon.  Scanline implementation;
    see tests for the brute-force point-in-polygon oracle.  ``side`` lets
    internal callers rasterize merged multi-tile frames.
    """
    mask = np.zeros((side, side), dtype=bool)
    for poly in polys:
        mask |= _rasterize_polygon(poly, t, side)
    return mask


def _rasterize_polygon(poly: GeoPolygon, t: TileId, side: int = TILE_SIZE) -> np.ndarray:
    x1s, y1s, x2s, y2s = [], [], [], []
    for ring in [poly.exterior, *poly.holes]:
        px, py = ring_to_tile_pixels(ring, t)
        x1s.append(px[:-1])
        y1s.append(py[:-1])
        x2s.append(px[1:])
        y2s.append(py[1:])
    x1 = np.concatenate(x1s)
    y1 = np.concatenate(y1s)
    x2 = np.concatenate(x2s)
    y2 = np.concatenate(y2s)

    mask = np.zeros((side, side), dtype=bool)
    j_lo = max(int(np.floor(min(y1.min(), y2.min()) - 0.5)), 0)
    j_hi = min(int(np.ceil(max(y1.max(), y2.max()) + 0.5)), side)
    if j_lo >= j_hi:
        return mask
    rows = np.arange(j_lo, j_hi, dtype=np.float64) + 0.5
    crosses = (y1[:, None] > rows[None, :]) != (y2[:, None] > rows[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        tpar = (rows[None, :] - y1[:, None]) / (y2 - y1)[:, None]
        xc = x1[:, None] + tpar * (x2 - x1)[:, None]
    xc[~crosses] = np.nan

    centers = np.arange(side, dtype=np.float64) + 0.5
    counts = crosses.sum(axis=0)
    for col, j in enumerate(range(j_lo, j_hi)):
        if not counts[col]:
            continue
        xs = np.sort(xc[:, col])
        xs = xs[: counts[col]]  # NaNs sort to the end
        n_right = xs.size - np.searchsorted(xs, centers, side="right")
        mask[j] = (n_right % 2).astype(bool)
    return mask


def build_mask_dataset(
    network: VectorNetwork, tiles: list, out_dir: Path | str
) -> int:
    """Rasterize the network into one mask PNG per tile; returns count written.

    All tiles must share one zoom.  Every requested tile gets a file, even
    when the network misses it (all-background mask).
    """
    if not tiles:
        return 0
    zooms = {t.z for t in tiles}
    if len(zooms) != 1:
        raise DomainError(f"tiles span multiple zooms: {sorted(zooms)}")
    bounds = [geometry.ring_bounds(p.exterior) for p in network.polygons]
    errors = []
    written = 0
    for tile in tiles:
        bb = tile_to_bbox(tile)
        clipped = []
        for poly, (minx, miny, maxx, maxy) in zip(network.polygons, bounds):
            if minx > bb.east or maxx < bb.west or miny > bb.north or maxy < bb.south:
                continue
            clipped.extend(clip_polygon_to_bbox(poly, bb))
        mask = rasterize(clipped, tile)
        try:
            write_mask(mask, mask_path(out_dir, tile))
            written += 1
        except OSError as exc:
            errors.append(f"{tile.path()}: {exc}")
    if errors:
        raise MissingInputError(
            f"{len(errors)} mask(s) could not be written: " + "; ".join(errors[:5])
        )
    return written


@dataclass
class DatasetSplit:
    """Disjoint train/val/test tile lists produced by a seeded shuffle."""

    train: list
    val: list
    test: list
    seed: int


def split_dataset(tiles: list, seed: int, n_train: int, n_val: int) -> DatasetSplit:
    """Deterministic seeded split; leftover tiles become the test set."""
    if n_train < 0 or n_val < 0:
        raise DomainError("split sizes must be non-negative")
    if n_train + n_val > len(tiles):
        raise DomainError(
            f"cannot split {len(tiles)} tiles into {n_train} train + {n_val} val"
        )
    pool = sorted(tiles, key=lambda t: (t.z, t.y, t.x))
    random.Random(seed).shuffle(pool)
    return DatasetSplit(
        train=pool[:n_train],
        val=pool[n_train : n_train + n_val],
        test=pool[n_train + n_val :],
        seed=seed,
    )


def write_split_manifest(split: DatasetSplit, path: Path | str) -> None:
    """Write the split as "z/x/y<TAB>role" lines, one tile per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for role, tiles in (("train", split.train), ("val", split.val), ("test", split.test)):
        for t in tiles:
            lines.append(f"{t.z}/{t.x}/{t.y}\t{role}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def read_split_manifest(path: Path | str) -> dict:
    """Parse a split manifest into {"train": [...], "val": [...], "test": [...]}."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"split manifest not found: {path}")
    out: dict = {"train": [], "val": [], "test": []}
    for line_no, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            zxy, role = line.split("\t")
            z, x, y = (int(v) for v in zxy.split("/"))
            out[role].append(TileId(x=x, y=y, z=z))
        except (ValueError, KeyError) as exc:
            raise DomainError(f"{path}:{line_no}: bad manifest line {line!r}") from exc
    return out
