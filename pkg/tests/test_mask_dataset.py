from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest

from footpath.errors import DomainError, GeometryError, MissingInputError
from footpath.geo_tiles import (
    BBox,
    GeoPoint,
    TileId,
    global_pixel_to_latlon,
    latlon_to_tile,
    ring_to_tile_pixels,
    tile_to_bbox,
)
from footpath.geometry import GeoPolygon
from footpath.mask_dataset import (
    build_mask_dataset,
    clip_polygon_to_bbox,
    load_network,
    rasterize,
    read_split_manifest,
    split_dataset,
    write_split_manifest,
)
from footpath.mask_io import iter_mask_tree, read_mask


def shoelace(ring) -> float:
    x0, y0 = ring[0]
    s = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        s += (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    return 0.5 * s


def brute_force_mask(poly: GeoPolygon, t: TileId, side: int = 256) -> np.ndarray:
    """Independent oracle: textbook even-odd ray cast per pixel center."""
    rings_px = []
    for ring in [poly.exterior, *poly.holes]:
        px, py = ring_to_tile_pixels(ring, t)
        rings_px.append(list(zip(px.tolist(), py.tolist())))
    mask = np.zeros((side, side), dtype=bool)
    for j in range(side):
        yc = j + 0.5
        for i in range(side):
            xc = i + 0.5
            inside = False
            for ring in rings_px:
                for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
                    if (y1 > yc) != (y2 > yc):
                        x_cross = x1 + (yc - y1) * (x2 - x1) / (y2 - y1)
                        if xc < x_cross:
                            inside = not inside
            mask[j, i] = inside
    return mask


def square_ring(bb: BBox):
    return [
        (bb.west, bb.north),
        (bb.west, bb.south),
        (bb.east, bb.south),
        (bb.east, bb.north),
        (bb.west, bb.north),
    ]


def lattice_polygon(t: TileId, corners, holes=()):
    """Polygon from tile-local pixel-corner coordinates."""

    def ring(pts):
        out = []
        for x, y in pts:
            g = global_pixel_to_latlon(t.x * 256 + float(x), t.y * 256 + float(y), t.z)
            out.append((g.lon, g.lat))
        out.append(out[0])
        return out

    return GeoPolygon(exterior=ring(corners), holes=[ring(h) for h in holes])


class TestClip:
    def unit_polygon(self):
        ring = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]
        return GeoPolygon(exterior=ring)

    def test_fully_inside_unchanged(self):
        poly = self.unit_polygon()
        out = clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=2, north=2))
        assert len(out) == 1
        assert set(out[0].exterior) == set(poly.exterior)

    def test_disjoint_empty(self):
        out = clip_polygon_to_bbox(self.unit_polygon(), BBox(west=5, south=5, east=6, north=6))
        assert out == []

    def test_half_clip_halves_area(self):
        poly = self.unit_polygon()
        out = clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=0.5, north=2))
        assert len(out) == 1
        assert abs(shoelace(out[0].exterior)) == pytest.approx(0.5, abs=1e-12)

    def test_open_ring_rejected(self):
        poly = GeoPolygon(exterior=[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
        with pytest.raises(GeometryError):
            clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=2, north=2))

    def test_hole_survives_and_reassociates(self):
        hole = [(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75), (0.25, 0.25)]
        poly = GeoPolygon(exterior=self.unit_polygon().exterior, holes=[hole])
        out = clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=2, north=2))
        assert len(out) == 1 and len(out[0].holes) == 1
        # clip through the middle: hole clipped too, association kept
        out = clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=0.5, north=2))
        assert len(out) == 1 and len(out[0].holes) == 1
        assert abs(shoelace(out[0].holes[0])) == pytest.approx(0.25 * 0.5, abs=1e-12)

    def test_hole_outside_clip_window_dropped(self):
        hole = [(0.6, 0.6), (0.9, 0.6), (0.9, 0.9), (0.6, 0.9), (0.6, 0.6)]
        poly = GeoPolygon(exterior=self.unit_polygon().exterior, holes=[hole])
        out = clip_polygon_to_bbox(poly, BBox(west=-1, south=-1, east=0.5, north=2))
        assert len(out) == 1 and out[0].holes == []


class TestRasterize:
    def test_full_tile_polygon_all_true(self, melbourne_tile):
        poly = GeoPolygon(exterior=square_ring(tile_to_bbox(melbourne_tile)))
        mask = rasterize([poly], melbourne_tile)
        assert mask.all()
        assert int(mask.sum()) == 65536

    def test_no_polygons_all_false(self, melbourne_tile):
        assert not rasterize([], melbourne_tile).any()

    def test_left_half_rectangle_exact_count(self, melbourne_tile):
        poly = lattice_polygon(melbourne_tile, [(0, 0), (128, 0), (128, 256), (0, 256)])
        mask = rasterize([poly], melbourne_tile)
        assert int(mask.sum()) == 128 * 256
        assert mask[:, :128].all() and not mask[:, 128:].any()

    def test_matches_brute_force_oracle(self, melbourne_tile):
        rng = random.Random(123)
        bb = tile_to_bbox(melbourne_tile)
        for _ in range(3):
            pts = []
            cx, cy = 0.5 * (bb.west + bb.east), 0.5 * (bb.south + bb.north)
            n = rng.randint(3, 9)
            for k in range(n):
                ang = 2 * math.pi * k / n
                r = rng.uniform(0.2, 0.48)
                pts.append(
                    (
                        cx + r * (bb.east - bb.west) * math.cos(ang),
                        cy + r * (bb.north - bb.south) * math.sin(ang),
                    )
                )
            pts.append(pts[0])
            poly = GeoPolygon(exterior=pts)
            assert np.array_equal(
                rasterize([poly], melbourne_tile), brute_force_mask(poly, melbourne_tile)
            )

    def test_hole_respected_even_odd(self, melbourne_tile):
        poly = lattice_polygon(
            melbourne_tile,
            [(10, 10), (100, 10), (100, 100), (10, 100)],
            holes=[[(40, 40), (60, 40), (60, 60), (40, 60)]],
        )
        mask = rasterize([poly], melbourne_tile)
        assert int(mask.sum()) == 90 * 90 - 20 * 20

    def test_seam_consistency(self, melbourne_tile):
        left = melbourne_tile
        right = TileId(x=left.x + 1, y=left.y, z=left.z)
        poly = lattice_polygon(left, [(200, 50), (400, 50), (400, 150), (200, 150)])
        m_left = rasterize([poly], left)
        m_right = rasterize([poly], right)
        merged = rasterize([poly], left, side=512)
        assert np.array_equal(np.hstack([m_left, m_right]), merged[:256, :])

    def test_area_convergence_with_zoom(self):
        # diamond around a fixed point; rasterization error is bounded by
        # perimeter x pixel diagonal, so relative error shrinks with zoom
        cx, cy = 144.97, -37.8
        w = 0.004
        ring = [(cx + w, cy), (cx, cy + w), (cx - w, cy), (cx, cy - w), (cx + w, cy)]
        poly = GeoPolygon(exterior=ring)
        errors = []
        for z in (14, 15, 16):
            anchor = latlon_to_tile(GeoPoint(lat=cy + w, lon=cx - w), z)
            side = 1024 if z == 16 else 512
            count = int(rasterize([poly], anchor, side=side).sum())
            px, py = ring_to_tile_pixels(ring, anchor)
            area_px = abs(0.5 * float(np.sum(px[:-1] * py[1:] - px[1:] * py[:-1])))
            perim_px = float(np.sum(np.hypot(np.diff(px), np.diff(py))))
            err = abs(count - area_px)
            assert err <= perim_px * math.sqrt(2.0)
            errors.append(err / area_px)
        assert errors[2] < errors[0]


class TestLoadNetwork:
    def write(self, tmp_path, doc):
        p = tmp_path / "net.geojson"
        p.write_text(json.dumps(doc))
        return p

    def feature(self, rings, gtype="Polygon"):
        return {
            "type": "Feature",
            "properties": {},
            "geometry": {"type": gtype, "coordinates": rings},
        }

    def test_loads_polygon_and_multipolygon(self, tmp_path):
        sq = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
        sq2 = [[2, 2], [3, 2], [3, 3], [2, 3], [2, 2]]
        doc = {
            "type": "FeatureCollection",
            "features": [self.feature([sq]), self.feature([[sq2]], "MultiPolygon")],
        }
        net = load_network(self.write(tmp_path, doc))
        assert len(net.polygons) == 2

    def test_orientation_normalized(self, tmp_path):
        cw = [[0, 0], [0, 1], [1, 1], [1, 0], [0, 0]]  # clockwise exterior
        net = load_network(self.write(tmp_path, {"type": "FeatureCollection", "features": [self.feature([cw])]}))
        assert shoelace(net.polygons[0].exterior) > 0

    def test_open_ring_rejected(self, tmp_path):
        bad = [[0, 0], [1, 0], [1, 1], [0, 1]]
        with pytest.raises(GeometryError):
            load_network(self.write(tmp_path, {"type": "FeatureCollection", "features": [self.feature([bad])]}))

    def test_self_intersection_rejected(self, tmp_path):
        bowtie = [[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]
        with pytest.raises(GeometryError):
            load_network(self.write(tmp_path, {"type": "FeatureCollection", "features": [self.feature([bowtie])]}))

    def test_unsupported_geometry_rejected(self, tmp_path):
        doc = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {},
                    "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]},
                }
            ],
        }
        with pytest.raises(GeometryError):
            load_network(self.write(tmp_path, doc))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingInputError):
            load_network(tmp_path / "nope.geojson")


class TestBuildMaskDataset:
    def tiles_2x2(self, melbourne_tile):
        t = melbourne_tile
        return [TileId(x=t.x + i, y=t.y + j, z=t.z) for j in range(2) for i in range(2)]

    def test_empty_network_writes_zero_masks(self, tmp_path, melbourne_tile):
        tiles = self.tiles_2x2(melbourne_tile)
        from footpath.mask_dataset import VectorNetwork

        count = build_mask_dataset(VectorNetwork(polygons=[]), tiles, tmp_path)
        assert count == 4
        for tile, path in iter_mask_tree(tmp_path):
            assert not read_mask(path).any()

    def test_single_tile_network(self, tmp_path, melbourne_tile):
        from footpath.mask_dataset import VectorNetwork

        tiles = self.tiles_2x2(melbourne_tile)
        poly = lattice_polygon(melbourne_tile, [(10, 10), (50, 10), (50, 50), (10, 50)])
        build_mask_dataset(VectorNetwork(polygons=[poly]), tiles, tmp_path)
        nonzero = [t for t, p in iter_mask_tree(tmp_path) if read_mask(p).any()]
        assert nonzero == [melbourne_tile]

    def test_foreground_total_matches_merged_raster(self, tmp_path, melbourne_tile):
        from footpath.mask_dataset import VectorNetwork

        tiles = self.tiles_2x2(melbourne_tile)
        poly = lattice_polygon(
            melbourne_tile, [(100, 100), (400, 100), (400, 400), (100, 400)]
        )
        build_mask_dataset(VectorNetwork(polygons=[poly]), tiles, tmp_path)
        per_tile_total = sum(int(read_mask(p).sum()) for _, p in iter_mask_tree(tmp_path))
        merged = rasterize([poly], melbourne_tile, side=512)
        assert per_tile_total == int(merged.sum()) == 300 * 300

    def test_mixed_zoom_rejected(self, tmp_path, melbourne_tile):
        from footpath.mask_dataset import VectorNetwork

        tiles = [melbourne_tile, TileId(0, 0, 5)]
        with pytest.raises(DomainError):
            build_mask_dataset(VectorNetwork(polygons=[]), tiles, tmp_path)


class TestSplit:
    def tiles(self, n):
        return [TileId(x=i % 32, y=i // 32, z=8) for i in range(n)]

    def test_deterministic_for_seed(self):
        tiles = self.tiles(50)
        a = split_dataset(tiles, seed=9, n_train=30, n_val=10)
        b = split_dataset(list(reversed(tiles)), seed=9, n_train=30, n_val=10)
        assert a.train == b.train and a.val == b.val and a.test == b.test

    def test_different_seed_differs(self):
        tiles = self.tiles(50)
        a = split_dataset(tiles, seed=1, n_train=30, n_val=10)
        b = split_dataset(tiles, seed=2, n_train=30, n_val=10)
        assert a.train != b.train

    def test_partition_properties(self):
        tiles = self.tiles(40)
        s = split_dataset(tiles, seed=3, n_train=25, n_val=10)
        all_out = s.train + s.val + s.test
        assert len(all_out) == 40
        assert set(all_out) == set(tiles)
        assert not (set(s.train) & set(s.val))
        assert not (set(s.train) & set(s.test))
        assert not (set(s.val) & set(s.test))

    def test_exhaustive_split_empty_test(self):
        tiles = self.tiles(10)
        s = split_dataset(tiles, seed=0, n_train=10, n_val=0)
        assert s.test == [] and s.val == []

    def test_paper_proportions_1200(self):
        tiles = self.tiles(1200)
        s = split_dataset(tiles, seed=0, n_train=1000, n_val=200)
        assert (len(s.train), len(s.val), len(s.test)) == (1000, 200, 0)

    def test_insufficient_tiles(self):
        with pytest.raises(DomainError):
            split_dataset(self.tiles(5), seed=0, n_train=4, n_val=2)

    def test_manifest_round_trip(self, tmp_path):
        s = split_dataset(self.tiles(12), seed=5, n_train=8, n_val=2)
        path = tmp_path / "split.tsv"
        write_split_manifest(s, path)
        loaded = read_split_manifest(path)
        assert loaded["train"] == s.train
        assert loaded["val"] == s.val
        assert loaded["test"] == s.test
        first = path.read_text().splitlines()[0]
        z, x, y = first.split("\t")[0].split("/")
        assert first.split("\t")[1] in {"train", "val", "test"}
        assert TileId(x=int(x), y=int(y), z=int(z)) in s.train
