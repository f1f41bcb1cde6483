"""Mask PNG contract and {z}/{x}/{y}.png tree helpers.

Masks are 8-bit grayscale PNGs, foreground=255, background=0.  Decoding is
tolerant of probabilistic masks: any value >= 128 counts as foreground.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import FormatError
from .geo_tiles import TileId

FOREGROUND_THRESHOLD = 128


def mask_path(root: Path | str, tile: TileId) -> Path:
    return Path(root) / tile.path("png")


def write_mask(mask: np.ndarray, path: Path | str) -> None:
    """Write a boolean mask as 0/255 grayscale PNG (atomic tmp+rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L")
    tmp = path.with_suffix(".png.tmp")
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_mask(path: Path | str) -> np.ndarray:
    """Load a mask PNG as a boolean array (values >= 128 are foreground)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return arr >= FOREGROUND_THRESHOLD


def iter_mask_tree(root: Path | str) -> Iterator[tuple[TileId, Path]]:
    """Yield (tile, path) for every {z}/{x}/{y}.png under ``root``, sorted.

    Ordering is (z, y, x) so multi-tile operations are deterministic.
    """
    root = Path(root)
    found: list[tuple[int, int, int, Path]] = []
    for z_dir in root.iterdir() if root.is_dir() else []:
        if not z_dir.is_dir() or not z_dir.name.isdigit():
            continue
        z = int(z_dir.name)
        for x_dir in z_dir.iterdir():
            if not x_dir.is_dir() or not x_dir.name.isdigit():
                continue
            x = int(x_dir.name)
            for f in x_dir.glob("*.png"):
                if f.stem.isdigit():
                    found.append((z, int(f.stem), x, f))
    for z, y, x, f in sorted(found):
        yield TileId(x=x, y=y, z=z), f


def require_square(arr: np.ndarray, side: int, what: str) -> None:
    if arr.shape[:2] != (side, side):
        raise FormatError(f"{what} is {arr.shape[1]}x{arr.shape[0]}, expected {side}x{side}")
