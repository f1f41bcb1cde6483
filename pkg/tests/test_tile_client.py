from __future__ import annotations

import io
import threading
import time

import numpy as np
import pytest
from PIL import Image

from footpath.errors import DomainError, FormatError, ServerError, TransportError
from footpath.geo_tiles import BBox, TileId, tile_to_bbox, tiles_for_bbox
from footpath.tile_client import TileClient, TileSource


def png_bytes(side: int = 256, color=(30, 120, 60)) -> bytes:
    img = Image.new("RGB", (side, side), color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class FakeServer:
    """Deterministic transport double recording every request."""

    def __init__(self, status: int = 200, body: bytes | None = None, fail_first: int = 0):
        self.status = status
        self.body = body if body is not None else png_bytes()
        self.fail_first = fail_first
        self.calls: list[str] = []
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0

    def __call__(self, url: str) -> tuple[int, bytes]:
        with self.lock:
            self.calls.append(url)
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            time.sleep(0.01)
            if len(self.calls) <= self.fail_first:
                raise ConnectionError("flaky network")
            return self.status, self.body
        finally:
            with self.lock:
                self.in_flight -= 1


def make_client(tmp_path, server, **source_kw):
    defaults = dict(url_template="https://tiles.test/{z}/{x}/{y}.png", retry_limit=3)
    defaults.update(source_kw)
    sleeps = []
    client = TileClient(
        TileSource(**defaults), tmp_path / "cache", transport=server, sleep=sleeps.append
    )
    return client, sleeps


class TestTileSource:
    def test_placeholder_validation(self):
        with pytest.raises(DomainError):
            TileSource(url_template="https://t.test/{z}/{x}.png")
        with pytest.raises(DomainError):
            TileSource(url_template="https://t.test/{z}/{x}/{y}/{y}.png")
        with pytest.raises(DomainError):
            TileSource(url_template="https://t.test/{z}/{x}/{y}.png", max_parallel=0)

    def test_auth_token_as_query_param(self):
        src = TileSource(url_template="https://t.test/{z}/{x}/{y}.png", auth_token="s3cret")
        assert src.url_for(TileId(1, 2, 3)) == "https://t.test/3/1/2.png?key=s3cret"

    def test_auth_token_appends_to_existing_query(self):
        src = TileSource(url_template="https://t.test/{z}/{x}/{y}.png?v=2", auth_token="k")
        assert src.url_for(TileId(0, 0, 0)).endswith("?v=2&key=k")


class TestFetchTile:
    def test_downloads_and_caches(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        img = client.fetch_tile(TileId(5, 6, 7))
        assert img.pixels.shape == (256, 256, 3)
        assert (tmp_path / "cache" / "7" / "5" / "6.png").exists()
        assert len(server.calls) == 1

    def test_cache_hit_bypasses_network(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        client.fetch_tile(TileId(5, 6, 7))

        def offline(url):
            raise ConnectionError("server offline")

        client2 = TileClient(client.source, tmp_path / "cache", transport=offline)
        img = client2.fetch_tile(TileId(5, 6, 7))
        assert img.pixels.shape == (256, 256, 3)

    def test_404_is_server_error_and_not_cached(self, tmp_path):
        server = FakeServer(status=404)
        client, _ = make_client(tmp_path, server)
        with pytest.raises(ServerError) as exc:
            client.fetch_tile(TileId(5, 6, 7))
        assert exc.value.status == 404
        assert not (tmp_path / "cache" / "7" / "5" / "6.png").exists()

    def test_wrong_size_is_format_error(self, tmp_path):
        server = FakeServer(body=png_bytes(side=128))
        client, _ = make_client(tmp_path, server)
        with pytest.raises(FormatError):
            client.fetch_tile(TileId(0, 0, 1))

    def test_undecodable_body_is_format_error(self, tmp_path):
        server = FakeServer(body=b"not a png")
        client, _ = make_client(tmp_path, server)
        with pytest.raises(FormatError):
            client.fetch_tile(TileId(0, 0, 1))

    def test_retries_with_exponential_backoff(self, tmp_path):
        server = FakeServer(fail_first=2)
        client, sleeps = make_client(tmp_path, server)
        client.fetch_tile(TileId(0, 0, 1))
        assert len(server.calls) == 3
        assert sleeps == [0.5, 1.0]

    def test_exhausted_retries_raise_transport_error(self, tmp_path):
        server = FakeServer(fail_first=100)
        client, sleeps = make_client(tmp_path, server, retry_limit=2)
        with pytest.raises(TransportError):
            client.fetch_tile(TileId(0, 0, 1))
        assert len(server.calls) == 3  # initial try + 2 retries
        assert sleeps == [0.5, 1.0]


class TestFetchRegion:
    def region_4x4(self):
        # at z=6, tiles x,y in [32, 35]: build a bbox strictly inside them
        nw = tile_to_bbox(TileId(32, 32, 6))
        se = tile_to_bbox(TileId(35, 35, 6))
        return BBox(
            west=nw.west + 1e-6,
            south=se.south + 1e-6,
            east=se.east - 1e-6,
            north=nw.north - 1e-6,
        )

    def test_4x4_region_yields_16_files(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        tiles = client.fetch_region(self.region_4x4(), 6)
        assert len(tiles) == 16
        for t in tiles:
            assert (tmp_path / "cache" / f"{t.z}/{t.x}/{t.y}.png").exists()
        assert tiles == sorted(tiles, key=lambda t: (t.y, t.x))

    def test_second_fetch_is_no_network(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        client.fetch_region(self.region_4x4(), 6)
        before = len(server.calls)
        client.fetch_region(self.region_4x4(), 6)
        assert len(server.calls) == before

    def test_parallelism_is_bounded(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server, max_parallel=3)
        client.fetch_region(self.region_4x4(), 6)
        assert server.max_in_flight <= 3
        assert server.max_in_flight > 1  # it did run concurrently

    def test_partial_failure_preserves_cache(self, tmp_path):
        class Flaky(FakeServer):
            def __call__(self, url):
                if "/33.png" in url:
                    raise ConnectionError("boom")
                return super().__call__(url)

        server = Flaky()
        client, _ = make_client(tmp_path, server, retry_limit=0, max_parallel=2)
        with pytest.raises(TransportError):
            client.fetch_region(self.region_4x4(), 6)
        cached = list((tmp_path / "cache").rglob("*.png"))
        assert len(cached) == 12  # the 4 y=33 tiles failed, rest cached

    def test_world_bbox_z0(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        from footpath.geo_tiles import MAX_LAT

        tiles = client.fetch_region(
            BBox(west=-180.0, south=-MAX_LAT, east=180.0, north=MAX_LAT), 0
        )
        assert tiles == [TileId(0, 0, 0)]

    def test_degenerate_point_region(self, tmp_path):
        server = FakeServer()
        client, _ = make_client(tmp_path, server)
        tiles = client.fetch_region(BBox(west=10.0, south=10.0, east=10.0, north=10.0), 8)
        assert len(tiles) == 1
