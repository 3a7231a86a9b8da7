"""Mask-to-quadruple transcription: centroid, 3x3 direction, area binning.

The direction grid uses raster conventions: x is the column index, y the
row index, origin at the top-left pixel, so small y maps to "north".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core_types import (
    BinaryMask,
    ChangeMask,
    ClassEntry,
    Direction,
    Quantity,
    SemanticQuadruple,
)
from .errors import EmptyMask

_COMBINED = {
    (0, 0): Direction.NORTHWEST, (0, 1): Direction.NORTH, (0, 2): Direction.NORTHEAST,
    (1, 0): Direction.WEST, (1, 1): Direction.CENTER, (1, 2): Direction.EAST,
    (2, 0): Direction.SOUTHWEST, (2, 1): Direction.SOUTH, (2, 2): Direction.SOUTHEAST,
}

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class QuantityThresholds:
    """Pixel-area cut points between the four quantity bins.

    Defaults were calibrated for the imagery the rules were designed on;
    other tile resolutions need explicitly configured values (no automatic
    scaling with image size).
    """

    t1: int = 800
    t2: int = 4000
    t3: int = 8000

    def __post_init__(self):
        if not 0 < self.t1 < self.t2 < self.t3:
            raise ValueError(f"thresholds must satisfy 0 < t1 < t2 < t3, got ({self.t1}, {self.t2}, {self.t3})")


DEFAULT_THRESHOLDS = QuantityThresholds()


def centroid(mask: BinaryMask) -> tuple[float, float]:
    """Mean (x, y) of all foreground pixels.

    Integer coordinate sums are exact; the only rounding is the final
    division, so the result matches a per-pixel brute-force average bit
    for bit.
    """
    if mask.foreground_count == 0:
        raise EmptyMask("centroid of an empty mask is undefined")
    ys, xs = np.nonzero(mask.bits)
    n = mask.foreground_count
    return float(xs.sum(dtype=np.int64)) / n, float(ys.sum(dtype=np.int64)) / n


def direction(c_x: float, c_y: float, width: int, height: int) -> Direction:
    """Bin a centroid into one of nine grid cells.

    Both axes split at one third and two thirds (real arithmetic) with
    half-open intervals: equality with the lower edge falls into the
    middle cell, equality with the upper edge into the far cell.
    """
    if not (0 <= c_x < width and 0 <= c_y < height):
        raise ValueError(f"centroid ({c_x}, {c_y}) outside [0, {width}) x [0, {height})")
    row = 0 if c_y < height / 3 else (1 if c_y < 2 * height / 3 else 2)
    col = 0 if c_x < width / 3 else (1 if c_x < 2 * width / 3 else 2)
    return _COMBINED[(row, col)]


def quantity(n: int, thresholds: QuantityThresholds = DEFAULT_THRESHOLDS) -> Quantity:
    """Bin a foreground pixel count into the four-level quantity label."""
    if n < 1:
        raise EmptyMask("quantity is defined for at least one foreground pixel")
    if n < thresholds.t1:
        return Quantity.SINGLE
    if n < thresholds.t2:
        return Quantity.FEW
    if n < thresholds.t3:
        return Quantity.SEVERAL
    return Quantity.MULTIPLE


@dataclass(frozen=True)
class ClassTranscription:
    """Per-class transcription result; quadruple is None for empty classes."""

    entry: ClassEntry
    pixel_count: int
    centroid: tuple[float, float] | None
    quadruple: SemanticQuadruple | None


def class_transcriptions(
    mask: ChangeMask,
    thresholds: QuantityThresholds = DEFAULT_THRESHOLDS,
) -> list[ClassTranscription]:
    """Transcribe every class-table entry, keeping empty classes as stats.

    A single pass over the raster collects all foreground pixels; the
    per-class work then touches foreground coordinates only.
    """
    ys, xs = np.nonzero(mask.labels)
    values = mask.labels[ys, xs]
    results = []
    for entry in mask.class_table:
        selected = values == entry.index
        n = int(np.count_nonzero(selected))
        if n == 0:
            results.append(ClassTranscription(entry=entry, pixel_count=0, centroid=None, quadruple=None))
            continue
        c_x = float(xs[selected].sum(dtype=np.int64)) / n
        c_y = float(ys[selected].sum(dtype=np.int64)) / n
        quad = SemanticQuadruple(
            location=direction(c_x, c_y, mask.width, mask.height),
            quantity=quantity(n, thresholds),
            category=entry.category,
            change_type=entry.change_type,
            pixel_count=n,
            centroid=(c_x, c_y),
        )
        results.append(ClassTranscription(entry=entry, pixel_count=n, centroid=(c_x, c_y), quadruple=quad))
    return results


def transcribe_mask(
    mask: ChangeMask,
    thresholds: QuantityThresholds = DEFAULT_THRESHOLDS,
) -> list[SemanticQuadruple]:
    """One quadruple per non-empty class, in class-table order.

    Empty classes are skipped silently; an all-no-change mask yields [].
    """
    return [ct.quadruple for ct in class_transcriptions(mask, thresholds) if ct.quadruple is not None]


@dataclass(frozen=True)
class RegionStats:
    """One connected component: area, inclusive bbox (x0, y0, x1, y1), centroid."""

    area: int
    bbox: tuple[int, int, int, int]
    centroid: tuple[float, float]


def region_stats(mask: BinaryMask, connectivity: int = 4) -> list[RegionStats]:
    """Connected-component statistics, ordered by top-left-most pixel.

    4-connectivity by default (conservative for building footprints);
    pass connectivity=8 to merge diagonal neighbours.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if mask.foreground_count == 0:
        return []
    labelled, _ = ndimage.label(mask.bits, structure=_STRUCTURES[connectivity])
    flat = labelled.ravel()
    positions = np.flatnonzero(flat)
    components = flat[positions]
    ids, first_seen = np.unique(components, return_index=True)
    stats = []
    for cid in ids[np.argsort(first_seen, kind="stable")]:
        idx = positions[components == cid]
        ys, xs = np.divmod(idx, mask.width)
        n = len(idx)
        stats.append(RegionStats(
            area=n,
            bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
            centroid=(float(xs.sum(dtype=np.int64)) / n, float(ys.sum(dtype=np.int64)) / n),
        ))
    return stats
