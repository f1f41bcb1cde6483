"""Pixel-level evaluation of predicted masks against ground truth.

Precision, recall and F1 follow the usual TP/FP/FN definitions; IoU is
overlap over union per class, and mIoU averages the footpath and
background classes.  Dataset scores are micro-aggregated: counts are
summed over all tiles first, then turned into ratios.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, MissingInputError
from .mask_io import iter_mask_tree, read_mask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    iou_foreground: float
    iou_background: float
    miou: float
    n_images: int
    n_missing: int = 0


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Exact pixel counts; masks must have equal dimensions."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DomainError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & gt)),
        fp=int(np.count_nonzero(pred & ~gt)),
        fn=int(np.count_nonzero(~pred & gt)),
        tn=int(np.count_nonzero(~pred & ~gt)),
    )


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp, errors=c.fp + c.fn)


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn, errors=c.fp + c.fn)


def f1(c: ConfusionCounts) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, errors=c.fp + c.fn)


def iou(c: ConfusionCounts, foreground: bool = True) -> float:
    """Class IoU; 1.0 when the class is absent from both masks."""
    if foreground:
        inter, union = c.tp, c.tp + c.fp + c.fn
    else:
        inter, union = c.tn, c.tn + c.fp + c.fn
    if union == 0:
        return 1.0
    return inter / union


def miou(c: ConfusionCounts) -> float:
    return 0.5 * (iou(c, foreground=True) + iou(c, foreground=False))


def _ratio(num: int, den: int, errors: int) -> float:
    if den == 0:
        # no prediction and no truth for the class: perfect unless errors exist
        return 0.0 if errors else 1.0
    return num / den


def report_from_counts(c: ConfusionCounts, n_images: int, n_missing: int = 0) -> EvalReport:
    return EvalReport(
        precision=precision(c),
        recall=recall(c),
        f1=f1(c),
        iou_foreground=iou(c, foreground=True),
        iou_background=iou(c, foreground=False),
        miou=miou(c),
        n_images=n_images,
        n_missing=n_missing,
    )


def evaluate_dataset(
    pred_dir: Path | str,
    gt_dir: Path | str,
    per_image_csv: Path | str | None = None,
) -> EvalReport:
    """Micro-aggregated metrics over matching {z}/{x}/{y}.png trees.

    Ground-truth tiles without a predicted counterpart are excluded and
    counted in ``n_missing``.  Optionally writes one CSV row per tile.
    """
    gt_dir = Path(gt_dir)
    pred_dir = Path(pred_dir)
    if not gt_dir.is_dir():
        raise MissingInputError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise MissingInputError(f"prediction directory not found: {pred_dir}")

    total = ConfusionCounts(0, 0, 0, 0)
    n_images = 0
    n_missing = 0
    rows = []
    for tile, gt_path in iter_mask_tree(gt_dir):
        pred_path = pred_dir / tile.path("png")
        if not pred_path.exists():
            n_missing += 1
            continue
        c = confusion(read_mask(pred_path), read_mask(gt_path))
        total = total + c
        n_images += 1
        if per_image_csv is not None:
            rows.append(
                {
                    "tile": f"{tile.z}/{tile.x}/{tile.y}",
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "tn": c.tn,
                    "f1": f1(c),
                    "miou": miou(c),
                }
            )
    if per_image_csv is not None:
        per_image_csv = Path(per_image_csv)
        per_image_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(per_image_csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["tile", "tp", "fp", "fn", "tn", "f1", "miou"]
            )
            writer.writeheader()
            writer.writerows(rows)
    return report_from_counts(total, n_images, n_missing)


def format_report(report: EvalReport) -> str:
    """Plain-text table (micro-averaged over all evaluated tiles)."""
    lines = [
        "metric           value",
        "---------------  ------",
        f"precision        {report.precision:.4f}",
        f"recall           {report.recall:.4f}",
        f"f1               {report.f1:.4f}",
        f"iou_foreground   {report.iou_foreground:.4f}",
        f"iou_background   {report.iou_background:.4f}",
        f"miou             {report.miou:.4f}",
        f"images           {report.n_images}",
    ]
    if report.n_missing:
        lines.append(f"missing pairs    {report.n_missing}")
    lines.append("(aggregation: micro — counts summed before ratios)")
    return "\n".join(lines)


def write_report_json(report: EvalReport, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(asdict(report), aggregation="micro")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
