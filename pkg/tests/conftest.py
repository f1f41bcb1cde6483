from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from footpath.geo_tiles import TileId

DATA_DIR = Path(__file__).parent / "data"

# pinned by evaluating the slippy formula in double precision (cross-checked
# against a 50-digit evaluation) for lat=-37.8136, lon=144.9631, z=21
MELBOURNE_X = 1893047
MELBOURNE_Y = 1286844

# exact foreground pixel count of the fixture network over its 3x2 tile block
FIXTURE_FOREGROUND_PX = 26812
FIXTURE_TILES = [
    TileId(x=MELBOURNE_X + i, y=MELBOURNE_Y + j, z=21)
    for j in range(2)
    for i in range(3)
]


@pytest.fixture
def melbourne_tile() -> TileId:
    return TileId(x=MELBOURNE_X, y=MELBOURNE_Y, z=21)


def blob_mask(rng: np.random.Generator, density: float, side: int = 256) -> np.ndarray:
    """Random smooth blob mask with roughly the requested foreground density."""
    coarse = rng.random((side // 8, side // 8))
    up = ndimage.zoom(coarse, 8, order=1)
    threshold = np.quantile(up, 1.0 - density)
    return up > threshold


@pytest.fixture
def fixture_workspace(tmp_path: Path) -> Path:
    """Copy of the frozen fixture network + config into a scratch dir."""
    shutil.copy(DATA_DIR / "fixture_network.geojson", tmp_path / "fixture_network.geojson")
    shutil.copy(DATA_DIR / "fixture_config.ini", tmp_path / "config.ini")
    return tmp_path
