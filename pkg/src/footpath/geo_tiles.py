"""Web-Mercator / slippy-tile coordinate math.

Conversions among lat/lon degrees (EPSG:4326), XYZ tile indices, and
per-tile pixel coordinates.  All functions are pure and thread-safe.

Conventions:
- Tiles are 256x256 px; the world at zoom z is a 2^z x 2^z tile grid.
- y grows southward (row 0 is the northernmost tile).
- Points on a shared tile edge belong to the tile east/south of the edge
  (floor semantics), so tiles partition the world exactly.
- Latitude is limited to the Web-Mercator clamp; lon = +180 is rejected
  (the antimeridian is never crossed by a study area we support).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Final

import numpy as np

from .errors import DomainError

MAX_LAT: Final[float] = 85.05112878
MAX_ZOOM: Final[int] = 23
TILE_SIZE: Final[int] = 256

# meters per pixel at the equator for z=0: 2*pi*6378137/256
_EQUATOR_RESOLUTION: Final[float] = 156543.03392


def _check_zoom(z: int) -> None:
    if not isinstance(z, int) or not 0 <= z <= MAX_ZOOM:
        raise DomainError(f"zoom must be an integer in [0, {MAX_ZOOM}], got {z!r}")


@dataclass(frozen=True)
class TileId:
    """Slippy-map tile address (column x, row y, zoom z)."""

    x: int
    y: int
    z: int

    def __post_init__(self) -> None:
        _check_zoom(self.z)
        n = 1 << self.z
        if not 0 <= self.x < n:
            raise DomainError(f"tile x={self.x} outside [0, {n}) at z={self.z}")
        if not 0 <= self.y < n:
            raise DomainError(f"tile y={self.y} outside [0, {n}) at z={self.z}")

    def path(self, ext: str = "png") -> str:
        """Relative cache path for this tile: ``{z}/{x}/{y}.{ext}``."""
        return f"{self.z}/{self.x}/{self.y}.{ext}"


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 point in degrees, limited to the Web-Mercator latitude range."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -MAX_LAT <= self.lat <= MAX_LAT:
            raise DomainError(f"latitude {self.lat} outside [-{MAX_LAT}, {MAX_LAT}]")
        if not -180.0 <= self.lon < 180.0:
            raise DomainError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class PixelCoord:
    """Fractional pixel position inside one tile."""

    tile: TileId
    px: float
    py: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.px < TILE_SIZE or not 0.0 <= self.py < TILE_SIZE:
            raise DomainError(f"pixel ({self.px}, {self.py}) outside [0, {TILE_SIZE})")


@dataclass(frozen=True)
class BBox:
    """Geographic extent in degrees; east may equal +180 (world extent).

    Degenerate extents (west == east, south == north) are allowed so a
    single point can be used as a fetch region.
    """

    west: float
    south: float
    east: float
    north: float

    def __post_init__(self) -> None:
        if self.west > self.east or self.south > self.north:
            raise DomainError(
                f"inverted bbox ({self.west}, {self.south}, {self.east}, {self.north})"
            )
        if self.west < -180.0 or self.east > 180.0:
            raise DomainError("bbox longitudes outside [-180, 180]")
        if self.south < -MAX_LAT or self.north > MAX_LAT:
            raise DomainError(f"bbox latitudes outside [-{MAX_LAT}, {MAX_LAT}]")


def latlon_to_global_pixel(lat: float, lon: float, z: int) -> tuple[float, float]:
    """Map lat/lon to continuous global pixel coordinates at zoom ``z``.

    The world spans [0, 256*2^z) on both axes; x grows east, y grows south.
    Rounding at the latitude clamp is folded back into the valid range.
    """
    _check_zoom(z)
    world = float(TILE_SIZE << z)
    gx = (lon + 180.0) / 360.0 * world
    phi = math.radians(lat)
    gy = (1.0 - math.asinh(math.tan(phi)) / math.pi) / 2.0 * world
    # lat = +/-MAX_LAT lands a hair outside [0, world) in float; fold it back
    gx = min(max(gx, 0.0), math.nextafter(world, 0.0))
    gy = min(max(gy, 0.0), math.nextafter(world, 0.0))
    return gx, gy


def global_pixel_to_latlon(gx: float, gy: float, z: int) -> GeoPoint:
    """Inverse of :func:`latlon_to_global_pixel`; accepts the closed corner grid.

    ``gx``/``gy`` may equal 256*2^z exactly (the SE corner of the world).
    The extreme rows map to exactly +/-MAX_LAT so tile bboxes meet the
    documented world extent.
    """
    _check_zoom(z)
    world = float(TILE_SIZE << z)
    if not 0.0 <= gx <= world or not 0.0 <= gy <= world:
        raise DomainError(f"global pixel ({gx}, {gy}) outside [0, {world}]")
    lon = gx / world * 360.0 - 180.0
    if gy <= 0.0:
        lat = MAX_LAT
    elif gy >= world:
        lat = -MAX_LAT
    else:
        lat = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * gy / world))))
    if lon >= 180.0:
        lon = math.nextafter(180.0, 0.0)
    return GeoPoint(lat=lat, lon=lon)


def latlon_to_tile(p: GeoPoint, z: int) -> TileId:
    """Tile containing ``p`` at zoom ``z`` (left/top-inclusive edge rule)."""
    gx, gy = latlon_to_global_pixel(p.lat, p.lon, z)
    n = 1 << z
    x = min(int(gx // TILE_SIZE), n - 1)
    y = min(int(gy // TILE_SIZE), n - 1)
    return TileId(x=x, y=y, z=z)


def tile_to_bbox(t: TileId) -> BBox:
    """Geographic footprint of ``t``: corners (x, y) and (x+1, y+1)."""
    n = 1 << t.z
    west = t.x / n * 360.0 - 180.0
    east = (t.x + 1) / n * 360.0 - 180.0
    north = _tile_row_to_lat(t.y, n)
    south = _tile_row_to_lat(t.y + 1, n)
    return BBox(west=west, south=south, east=east, north=north)


def _tile_row_to_lat(y: int, n: int) -> float:
    if y <= 0:
        return MAX_LAT
    if y >= n:
        return -MAX_LAT
    return math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * y / n))))


def pixel_to_latlon(pc: PixelCoord) -> GeoPoint:
    """Lat/lon of the fractional pixel position ``pc``."""
    t = pc.tile
    return global_pixel_to_latlon(
        t.x * TILE_SIZE + pc.px, t.y * TILE_SIZE + pc.py, t.z
    )


def latlon_to_pixel(p: GeoPoint, z: int) -> PixelCoord:
    """Tile plus fractional in-tile pixel position of ``p`` at zoom ``z``."""
    gx, gy = latlon_to_global_pixel(p.lat, p.lon, z)
    n = 1 << z
    x = min(int(gx // TILE_SIZE), n - 1)
    y = min(int(gy // TILE_SIZE), n - 1)
    tile = TileId(x=x, y=y, z=z)
    px = min(gx - x * TILE_SIZE, math.nextafter(float(TILE_SIZE), 0.0))
    py = min(gy - y * TILE_SIZE, math.nextafter(float(TILE_SIZE), 0.0))
    return PixelCoord(tile=tile, px=px, py=py)


def ground_resolution(lat: float, z: int) -> float:
    """Meters covered by one pixel at latitude ``lat`` and zoom ``z``."""
    if not -MAX_LAT <= lat <= MAX_LAT:
        raise DomainError(f"latitude {lat} outside [-{MAX_LAT}, {MAX_LAT}]")
    _check_zoom(z)
    return _EQUATOR_RESOLUTION * math.cos(math.radians(lat)) / (1 << z)


def ring_to_tile_pixels(ring, t: TileId) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized map of a (lon, lat) ring into ``t``'s pixel frame.

    Returns continuous (px, py) arrays relative to the tile's NW corner;
    values may fall outside [0, 256) for geometry beyond the tile.
    """
    world = float(TILE_SIZE << t.z)
    lon = np.fromiter((p[0] for p in ring), dtype=np.float64, count=len(ring))
    lat = np.fromiter((p[1] for p in ring), dtype=np.float64, count=len(ring))
    gx = (lon + 180.0) / 360.0 * world
    gy = (1.0 - np.arcsinh(np.tan(np.radians(lat))) / math.pi) / 2.0 * world
    return gx - t.x * TILE_SIZE, gy - t.y * TILE_SIZE


def tiles_for_bbox(bbox: BBox, z: int) -> list[TileId]:
    """All tiles covering ``bbox`` at zoom ``z``, row-major by (y, x).

    Corners follow the edge-ownership rule, so a degenerate point bbox
    yields exactly the one tile that owns the point.
    """
    _check_zoom(z)
    east = bbox.east if bbox.east < 180.0 else math.nextafter(180.0, 0.0)
    nw = latlon_to_tile(GeoPoint(lat=bbox.north, lon=bbox.west), z)
    se = latlon_to_tile(GeoPoint(lat=bbox.south, lon=east), z)
    return [
        TileId(x=x, y=y, z=z)
        for y in range(nw.y, se.y + 1)
        for x in range(nw.x, se.x + 1)
    ]
