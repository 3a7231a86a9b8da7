"""Confusion accumulation and the SCD/BCD metric suite.

The exact algebra (including every degenerate-case convention) is pinned
in docs/metrics.md so reported scores stay reproducible bit for bit.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core_types import ChangeMask, ScdConfusion
from .errors import ClassOutOfRange, EmptyConfusion, ShapeMismatch


def _labels(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, ChangeMask) else np.asarray(mask)


def accumulate(pred, gt, conf: ScdConfusion) -> ScdConfusion:
    """Add one prediction/ground-truth pair of label rasters to a confusion.

    Pure accumulation: a new ScdConfusion is returned, so partial results
    from parallel workers can be merged cell-wise in any order.
    """
    pred = _labels(pred)
    gt = _labels(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    side = conf.n_classes + 1
    pred_flat = pred.ravel().astype(np.int64)
    gt_flat = gt.ravel().astype(np.int64)
    for name, arr in (("prediction", pred_flat), ("ground truth", gt_flat)):
        if arr.size and (arr.min() < 0 or arr.max() >= side):
            raise ClassOutOfRange(f"{name} labels must lie in [0, {side})")
    counts = np.bincount(gt_flat * side + pred_flat, minlength=side * side).reshape(side, side)
    return ScdConfusion(n_classes=conf.n_classes, cells=conf.cells + counts)


def _safe_div(num: float, den: float) -> float:
    # 0/0 style degenerate ratios are defined as 0 to keep averages finite.
    return num / den if den > 0 else 0.0


def _f1(precision: float, recall: float) -> float:
    return _safe_div(2.0 * precision * recall, precision + recall)


class BinaryMetrics(NamedTuple):
    f1: float
    iou: float
    oa: float
    precision: float
    recall: float


def binary_metrics(conf: ScdConfusion) -> BinaryMetrics:
    """Change-as-positive metrics for a binary (1 semantic class) task."""
    if conf.n_classes != 1:
        raise ShapeMismatch(f"binary metrics need exactly 1 semantic class, got {conf.n_classes}")
    if conf.total == 0:
        raise EmptyConfusion("confusion matrix contains no pixels")
    cells = conf.cells
    tn, fp = float(cells[0, 0]), float(cells[0, 1])
    fn, tp = float(cells[1, 0]), float(cells[1, 1])
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    return BinaryMetrics(
        f1=_f1(precision, recall),
        iou=_safe_div(tp, tp + fp + fn),
        oa=(tp + tn) / (tp + tn + fp + fn),
        precision=precision,
        recall=recall,
    )


class ScdMetrics(NamedTuple):
    sek: float
    f_scd: float
    miou: float
    precision: float
    recall: float
    mf1: float
    oa: float


def _kappa(cells: np.ndarray) -> float:
    total = float(cells.sum())
    if total == 0:
        return 0.0
    po = float(np.trace(cells)) / total
    pe = float((cells.sum(axis=0, dtype=np.float64) * cells.sum(axis=1, dtype=np.float64)).sum()) / (total * total)
    if 1.0 - pe == 0.0:
        # All remaining mass in a single cell; no agreement beyond chance
        # is measurable, so kappa is defined as 0.
        return 0.0
    return (po - pe) / (1.0 - pe)


def scd_metrics(conf: ScdConfusion, average: str = "class") -> ScdMetrics:
    """Semantic change detection suite over an (n+1)x(n+1) confusion.

    ``average`` selects how Pre/Rec/mF1 aggregate: "class" averages over
    non-empty semantic classes; "change_pixel" scores correctly classified
    changed pixels against predicted/actual changed pixels (the micro
    variant, whose F1 equals f_scd).
    """
    if average not in ("class", "change_pixel"):
        raise ValueError(f"average must be 'class' or 'change_pixel', got {average!r}")
    if conf.total == 0:
        raise EmptyConfusion("confusion matrix contains no pixels")
    cells = conf.cells.astype(np.float64)
    n = conf.n_classes
    total = float(cells.sum())

    tn = cells[0, 0]
    fp = float(cells[0, 1:].sum())
    fn = float(cells[1:, 0].sum())
    tp = float(cells[1:, 1:].sum())
    iou_change = _safe_div(tp, tp + fp + fn)
    iou_nochange = _safe_div(tn, tn + fp + fn)
    # A side absent from both rasters (0/0) drops out of the mean, so a
    # perfect all-no-change prediction still scores mIoU = 1.
    parts = [iou for iou, defined in ((iou_change, tp + fp + fn > 0), (iou_nochange, tn + fp + fn > 0)) if defined]
    miou = float(np.mean(parts))

    zeroed = cells.copy()
    zeroed[0, 0] = 0.0
    # Degenerate rule: with no change pixels in either raster the zeroed
    # matrix is empty and sek is defined as 0.
    sek = _kappa(zeroed) * math.exp(iou_change - 1.0)

    correct_change = float(np.diag(cells)[1:].sum())
    predicted_change = float(cells[:, 1:].sum())
    actual_change = float(cells[1:, :].sum())
    p_scd = _safe_div(correct_change, predicted_change)
    r_scd = _safe_div(correct_change, actual_change)
    f_scd = _f1(p_scd, r_scd)

    if average == "change_pixel":
        precision, recall, mf1 = p_scd, r_scd, f_scd
    else:
        precisions, recalls, f1s = [], [], []
        for c in range(1, n + 1):
            row = float(cells[c, :].sum())
            col = float(cells[:, c].sum())
            if row + col == 0:
                continue  # class absent from both rasters: excluded from averages
            p_c = _safe_div(cells[c, c], col)
            r_c = _safe_div(cells[c, c], row)
            precisions.append(p_c)
            recalls.append(r_c)
            f1s.append(_f1(p_c, r_c))
        precision = float(np.mean(precisions)) if precisions else 0.0
        recall = float(np.mean(recalls)) if recalls else 0.0
        mf1 = float(np.mean(f1s)) if f1s else 0.0

    return ScdMetrics(
        sek=sek,
        f_scd=f_scd,
        miou=miou,
        precision=precision,
        recall=recall,
        mf1=mf1,
        oa=float(np.trace(cells)) / total,
    )
