"""Footpath network generation from slippy-map tiles.

Builds ground-truth mask datasets from a vector footpath network,
converts predicted binary masks into a simplified, dissolved GeoJSON
footpath layer, and evaluates predictions with F1/mIoU.
"""

__version__ = "0.1.0"

from .geo_tiles import BBox, GeoPoint, PixelCoord, TileId  # noqa: F401
from .geometry import GeoPolygon  # noqa: F401
