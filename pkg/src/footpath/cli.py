"""Command-line pipeline: fetch -> build-masks -> split -> assemble -> evaluate.

Configuration is an INI file; every key can be overridden on the command
line with ``--set section.key=value``.  Exit codes are a stable contract:
0 success, 1 usage/config error, 2 missing inputs, 3 transport error,
4 geometry error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import mask_io, metrics
from .errors import (
    DomainError,
    FootpathError,
    GeometryError,
    MissingInputError,
    TransportError,
)
from .geo_tiles import BBox, TileId, tiles_for_bbox
from .mask_dataset import (
    build_mask_dataset,
    load_network,
    split_dataset,
    write_split_manifest,
)
from .network_assembler import merge_tiles, simplify_collection, write_geojson
from .tile_client import TileClient, TileSource
from .vectorizer import vectorize_tile

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_INPUT = 2
EXIT_TRANSPORT = 3
EXIT_GEOMETRY = 4

AUTH_ENV_VAR = "FOOTPATH_TILE_KEY"

_DEFAULTS = {
    "tiles": {"url_template": "", "auth_token": "", "max_parallel": "4", "retry_limit": "3"},
    "region": {"west": "", "south": "", "east": "", "north": "", "zoom": "21"},
    "paths": {
        "cache": "cache",
        "masks_gt": "masks_gt",
        "masks_pred": "masks_pred",
        "out": "out",
        "network": "",
    },
    "vectorize": {"tol_px": "1.0"},
    "split": {"seed": "0", "n_train": "1000", "n_val": "200", "min_foreground_px": "0"},
    "metrics": {"per_image_csv": "false"},
}


@dataclass
class PipelineConfig:
    source: Optional[TileSource]
    region: Optional[BBox]
    zoom: int
    cache_dir: Path
    masks_gt_dir: Path
    masks_pred_dir: Path
    out_dir: Path
    network_path: Optional[Path]
    tol_px: float
    seed: int
    n_train: int
    n_val: int
    min_foreground_px: int
    per_image_csv: bool
    raw: configparser.ConfigParser

    def region_tiles(self) -> list:
        if self.region is None:
            return []
        return tiles_for_bbox(self.region, self.zoom)


def load_config(path: Path | str, overrides: list) -> PipelineConfig:
    """Parse the INI config, apply --set overrides, validate invariants."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read_dict(_DEFAULTS)
    parser.read(path)
    for item in overrides:
        try:
            key, value = item.split("=", 1)
            section, option = key.split(".", 1)
        except ValueError as exc:
            raise DomainError(f"--set expects section.key=value, got {item!r}") from exc
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value)

    base = path.parent

    def _path(section: str, option: str) -> Path:
        return (base / parser.get(section, option)).resolve()

    region = None
    region_vals = [parser.get("region", k) for k in ("west", "south", "east", "north")]
    if all(v != "" for v in region_vals):
        region = BBox(
            west=float(region_vals[0]),
            south=float(region_vals[1]),
            east=float(region_vals[2]),
            north=float(region_vals[3]),
        )

    source = None
    if parser.get("tiles", "url_template"):
        token = parser.get("tiles", "auth_token") or os.environ.get(AUTH_ENV_VAR) or None
        source = TileSource(
            url_template=parser.get("tiles", "url_template"),
            auth_token=token,
            max_parallel=parser.getint("tiles", "max_parallel"),
            retry_limit=parser.getint("tiles", "retry_limit"),
        )

    zoom = parser.getint("region", "zoom")
    if not 0 <= zoom <= 23:
        raise DomainError(f"zoom must be in [0, 23], got {zoom}")
    tol_px = parser.getfloat("vectorize", "tol_px")
    if tol_px < 0:
        raise DomainError(f"tol_px must be non-negative, got {tol_px}")

    dirs = {
        "cache": _path("paths", "cache"),
        "masks_gt": _path("paths", "masks_gt"),
        "masks_pred": _path("paths", "masks_pred"),
        "out": _path("paths", "out"),
    }
    if len(set(dirs.values())) != len(dirs):
        raise DomainError(f"configured directories must be distinct: {dirs}")

    network = parser.get("paths", "network")
    return PipelineConfig(
        source=source,
        region=region,
        zoom=zoom,
        cache_dir=dirs["cache"],
        masks_gt_dir=dirs["masks_gt"],
        masks_pred_dir=dirs["masks_pred"],
        out_dir=dirs["out"],
        network_path=(base / network).resolve() if network else None,
        tol_px=tol_px,
        seed=parser.getint("split", "seed"),
        n_train=parser.getint("split", "n_train"),
        n_val=parser.getint("split", "n_val"),
        min_foreground_px=parser.getint("split", "min_foreground_px"),
        per_image_csv=parser.getboolean("metrics", "per_image_csv"),
        raw=parser,
    )


def echo_effective_config(cfg: PipelineConfig) -> None:
    """Write the effective configuration next to the outputs (run record)."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for section in sorted(cfg.raw.sections()):
        lines.append(f"[{section}]")
        for option in sorted(cfg.raw.options(section)):
            lines.append(f"{option} = {cfg.raw.get(section, option)}")
        lines.append("")
    (cfg.out_dir / "effective.ini").write_text("\n".join(lines))


def cmd_fetch(cfg: PipelineConfig, args) -> int:
    tiles = cfg.region_tiles()
    if not tiles:
        print("fetched 0 tiles (no region configured)")
        return EXIT_OK
    if cfg.source is None:
        raise MissingInputError("no [tiles] url_template configured")
    client = TileClient(cfg.source, cfg.cache_dir)
    fetched = client.fetch_region(cfg.region, cfg.zoom)
    print(f"fetched {len(fetched)} tiles into {cfg.cache_dir}")
    return EXIT_OK


def cmd_build_masks(cfg: PipelineConfig, args) -> int:
    if cfg.network_path is None:
        raise MissingInputError("no network GeoJSON configured ([paths] network)")
    network = load_network(cfg.network_path)
    tiles = cfg.region_tiles()
    if not tiles:
        raise MissingInputError("no region configured for mask building")
    count = build_mask_dataset(network, tiles, cfg.masks_gt_dir)
    print(f"wrote {count} ground-truth masks into {cfg.masks_gt_dir}")
    return EXIT_OK


def _eligible_tiles(cfg: PipelineConfig) -> list:
    tiles = []
    for tile, path in mask_io.iter_mask_tree(cfg.masks_gt_dir):
        if cfg.min_foreground_px > 0:
            if int(np.count_nonzero(mask_io.read_mask(path))) < cfg.min_foreground_px:
                continue
        tiles.append(tile)
    return tiles


def cmd_split(cfg: PipelineConfig, args) -> int:
    if not cfg.masks_gt_dir.is_dir():
        raise MissingInputError(f"ground-truth mask tree not found: {cfg.masks_gt_dir}")
    tiles = _eligible_tiles(cfg)
    split = split_dataset(tiles, cfg.seed, cfg.n_train, cfg.n_val)
    out = cfg.out_dir / "split.tsv"
    write_split_manifest(split, out)
    print(
        f"split {len(tiles)} tiles into {len(split.train)} train / "
        f"{len(split.val)} val / {len(split.test)} test -> {out}"
    )
    return EXIT_OK


def cmd_assemble(cfg: PipelineConfig, args) -> int:
    if not cfg.masks_pred_dir.is_dir():
        raise MissingInputError(f"prediction mask tree not found: {cfg.masks_pred_dir}")
    per_tile = {}
    for tile, path in mask_io.iter_mask_tree(cfg.masks_pred_dir):
        per_tile[tile] = vectorize_tile(mask_io.read_mask(path), tile, 0.0)
    fc = merge_tiles(per_tile)
    fc = simplify_collection(fc, cfg.tol_px)
    out = cfg.out_dir / "out.geojson"
    n = write_geojson(fc, out)
    print(f"assembled {len(fc.features)} features ({n} bytes) -> {out}")
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    csv_path = cfg.out_dir / "per_image.csv" if cfg.per_image_csv else None
    report = metrics.evaluate_dataset(cfg.masks_pred_dir, cfg.masks_gt_dir, csv_path)
    metrics.write_report_json(report, cfg.out_dir / "report.json")
    print(metrics.format_report(report))
    return EXIT_OK


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(*parts) -> str:
    """Content hash over strings, files and whole mask trees."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, Path):
            if part.is_file():
                h.update(_hash_file(part).encode())
            elif part.is_dir():
                for tile, f in mask_io.iter_mask_tree(part):
                    h.update(tile.path().encode())
                    h.update(_hash_file(f).encode())
        else:
            h.update(str(part).encode())
        h.update(b"\x00")
    return h.hexdigest()


class _Manifest:
    """Content-hash record of completed stages (skipping support)."""

    def __init__(self, path: Path):
        self.path = path
        self.data: dict = {}
        if path.exists():
            self.data = json.loads(path.read_text())

    def up_to_date(self, stage: str, input_hash: str, outputs: list) -> bool:
        entry = self.data.get(stage)
        if not entry or entry.get("inputs") != input_hash:
            return False
        return all(Path(p).exists() for p in entry.get("outputs", [])) and all(
            Path(p).exists() for p in outputs
        )

    def record(self, stage: str, input_hash: str, outputs: list) -> None:
        self.data[stage] = {"inputs": input_hash, "outputs": [str(p) for p in outputs]}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def cmd_pipeline(cfg: PipelineConfig, args) -> int:
    manifest = _Manifest(cfg.out_dir / ".manifest.json")

    def run_stage(name, input_hash, outputs, fn) -> None:
        if manifest.up_to_date(name, input_hash, outputs):
            print(f"stage {name}: up to date, skipped")
            return
        fn()
        manifest.record(name, input_hash, outputs)

    region_tiles = cfg.region_tiles()

    if cfg.source is not None and region_tiles:
        cache_files = [cfg.cache_dir / t.path("png") for t in region_tiles]
        run_stage(
            "fetch",
            _hash_inputs(cfg.source.url_template, cfg.zoom, cfg.region),
            cache_files,
            lambda: cmd_fetch(cfg, args),
        )
    else:
        print("stage fetch: no tile source configured, skipped")

    if cfg.network_path is not None and region_tiles:
        mask_files = [cfg.masks_gt_dir / t.path("png") for t in region_tiles]
        run_stage(
            "build-masks",
            _hash_inputs(cfg.network_path, cfg.zoom, cfg.region),
            mask_files,
            lambda: cmd_build_masks(cfg, args),
        )
    else:
        print("stage build-masks: no network configured, skipped")

    if cfg.masks_gt_dir.is_dir() and (cfg.n_train or cfg.n_val):
        run_stage(
            "split",
            _hash_inputs(
                cfg.masks_gt_dir, cfg.seed, cfg.n_train, cfg.n_val, cfg.min_foreground_px
            ),
            [cfg.out_dir / "split.tsv"],
            lambda: cmd_split(cfg, args),
        )
    else:
        print("stage split: no ground-truth masks, skipped")

    run_stage(
        "assemble",
        _hash_inputs(cfg.masks_pred_dir, cfg.tol_px),
        [cfg.out_dir / "out.geojson"],
        lambda: cmd_assemble(cfg, args),
    )

    if cfg.masks_gt_dir.is_dir():
        run_stage(
            "evaluate",
            _hash_inputs(cfg.masks_pred_dir, cfg.masks_gt_dir, cfg.per_image_csv),
            [cfg.out_dir / "report.json"],
            lambda: cmd_evaluate(cfg, args),
        )
    else:
        print("stage evaluate: no ground-truth masks, skipped")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 for usage errors, per the contract
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


_COMMANDS = {
    "fetch": cmd_fetch,
    "build-masks": cmd_build_masks,
    "split": cmd_split,
    "vectorize": cmd_assemble,
    "assemble": cmd_assemble,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="footpath", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="path to INI config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config value (repeatable)",
        )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, args.set)
        echo_effective_config(cfg)
        return _COMMANDS[args.command](cfg, args)
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (DomainError, FootpathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
