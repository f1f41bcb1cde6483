"""XYZ tile fetching with on-disk caching, retries and bounded parallelism.

The transport is injectable so tests run against a deterministic fake
server; the default transport is a plain HTTP GET.  Cache layout matches
the mask contract ({cache_root}/{z}/{x}/{y}.png) but stores RGB imagery.
"""
from __future__ import annotations

import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import requests
from PIL import Image

from .errors import DomainError, FormatError, ServerError, TransportError
from .geo_tiles import BBox, TileId, tiles_for_bbox

Transport = Callable[[str], "tuple[int, bytes]"]

_BACKOFF_START = 0.5  # seconds; doubles per retry


@dataclass(frozen=True)
class TileSource:
    """An XYZ tile server: URL template plus politeness settings."""

    url_template: str
    auth_token: Optional[str] = None
    max_parallel: int = 4
    retry_limit: int = 3

    def __post_init__(self) -> None:
        for ph in ("{z}", "{x}", "{y}"):
            if self.url_template.count(ph) != 1:
                raise DomainError(
                    f"url_template must contain {ph} exactly once: {self.url_template!r}"
                )
        if self.max_parallel < 1:
            raise DomainError("max_parallel must be >= 1")
        if self.retry_limit < 0:
            raise DomainError("retry_limit must be >= 0")

    def url_for(self, t: TileId) -> str:
        url = self.url_template.format(z=t.z, x=t.x, y=t.y)
        if self.auth_token:
            sep = "&" if "?" in url else "?"
            url = f"{url}{sep}key={self.auth_token}"
        return url


@dataclass(frozen=True)
class TileImage:
    """Decoded 256x256 RGB tile."""

    tile: TileId
    pixels: np.ndarray  # uint8, (256, 256, 3)


def _http_get(url: str) -> tuple[int, bytes]:
    resp = requests.get(url, timeout=30)
    return resp.status_code, resp.content


class TileClient:
    """Shared, thread-safe fetcher for one tile source and cache directory."""

    def __init__(
        self,
        source: TileSource,
        cache_root: Path | str,
        transport: Transport = _http_get,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.source = source
        self.cache_root = Path(cache_root)
        self._transport = transport
        self._sleep = sleep

    def cache_path(self, t: TileId) -> Path:
        return self.cache_root / t.path("png")

    def fetch_tile(self, t: TileId) -> TileImage:
        """Return the tile, downloading and caching it on a cache miss."""
        path = self.cache_path(t)
        if path.exists():
            with Image.open(path) as img:
                pixels = np.asarray(img.convert("RGB"))
            return TileImage(tile=t, pixels=pixels)

        body = self._download(t)
        try:
            with Image.open(io.BytesIO(body)) as img:
                pixels = np.asarray(img.convert("RGB"))
        except Exception as exc:
            raise FormatError(f"tile {t.path()} did not decode as an image: {exc}") from exc
        if pixels.shape != (256, 256, 3):
            raise FormatError(
                f"tile {t.path()} is {pixels.shape[1]}x{pixels.shape[0]}, expected 256x256"
            )
        self._write_cache(pixels, path)
        return TileImage(tile=t, pixels=pixels)

    def _download(self, t: TileId) -> bytes:
        url = self.source.url_for(t)
        delay = _BACKOFF_START
        last_exc: Exception | None = None
        for attempt in range(self.source.retry_limit + 1):
            if attempt:
                self._sleep(delay)
                delay *= 2
            try:
                status, body = self._transport(url)
            except Exception as exc:
                last_exc = exc
                continue
            if status != 200:
                raise ServerError(f"tile {t.path()}: HTTP {status}", status=status)
            return body
        raise TransportError(
            f"tile {t.path()}: giving up after {self.source.retry_limit + 1} attempts: {last_exc}"
        ) from last_exc

    @staticmethod
    def _write_cache(pixels: np.ndarray, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".png.tmp")
        Image.fromarray(pixels, mode="RGB").save(tmp, format="PNG")
        os.replace(tmp, path)

    def fetch_region(self, bbox: BBox, z: int) -> list:
        """Cache every tile intersecting ``bbox``; returns the region tiles.

        Tiles already cached are not re-requested.  Per-tile failures are
        aggregated after the whole region has been attempted, so partial
        progress stays in the cache.
        """
        tiles = tiles_for_bbox(bbox, z)
        missing = [t for t in tiles if not self.cache_path(t).exists()]
        errors: list[str] = []
        if missing:
            with ThreadPoolExecutor(max_workers=self.source.max_parallel) as pool:
                futures = {pool.submit(self.fetch_tile, t): t for t in missing}
                for fut, t in futures.items():
                    try:
                        fut.result()
                    except (TransportError, FormatError) as exc:
                        errors.append(str(exc))
        if errors:
            raise TransportError(
                f"{len(errors)}/{len(missing)} tile(s) failed: " + "; ".join(errors[:5])
            )
        return tiles


def fetch_tile(
    source: TileSource, t: TileId, cache_root: Path | str, transport: Transport = _http_get
) -> TileImage:
    return TileClient(source, cache_root, transport).fetch_tile(t)


def fetch_region(
    source: TileSource,
    bbox: BBox,
    z: int,
    cache_root: Path | str,
    transport: Transport = _http_get,
) -> list:
    return TileClient(source, cache_root, transport).fetch_region(bbox, z)
