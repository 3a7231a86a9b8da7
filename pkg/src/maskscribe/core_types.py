"""Shared domain types for mask transcription, loss numerics and metrics.

Every type is immutable after construction; numpy buffers are frozen in
place (``writeable=False``), so instances are safe to share across threads
and to ship to worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeMismatch


class Direction(str, Enum):
    """Nine-way location label from a 3x3 partition of the image."""

    NORTH = "north"
    SOUTH = "south"
    EAST = "east"
    WEST = "west"
    CENTER = "center"
    NORTHEAST = "northeast"
    NORTHWEST = "northwest"
    SOUTHEAST = "southeast"
    SOUTHWEST = "southwest"


class Quantity(str, Enum):
    """Four-level, area-binned count descriptor."""

    SINGLE = "a single"
    FEW = "a few"
    SEVERAL = "several"
    MULTIPLE = "multiple"


def _frozen_array(values, dtype=None) -> np.ndarray:
    arr = np.asarray(values) if dtype is None else np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BinaryMask:
    """Single-class boolean raster with a cached foreground count.

    ``bits`` is a (height, width) boolean array; x is the column index and
    y the row index, both 0-based with the origin at the top-left pixel.
    """

    bits: np.ndarray
    foreground_count: int

    def __post_init__(self):
        bits = _frozen_array(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ShapeMismatch(f"binary mask must be a non-empty 2-D raster, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)
        if self.foreground_count != int(np.count_nonzero(bits)):
            raise ValueError("cached foreground_count does not match the raster")

    @classmethod
    def from_array(cls, bits) -> "BinaryMask":
        arr = np.asarray(bits, dtype=bool)
        return cls(bits=arr, foreground_count=int(np.count_nonzero(arr)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def recount(self) -> int:
        """Recompute the foreground count directly from the raster."""
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True)
class ClassEntry:
    """One change class: raster value plus its category and change type."""

    index: int
    category: str
    change_type: str


@dataclass(frozen=True)
class ChangeMask:
    """Labelled raster of per-pixel change classes; label 0 means no change.

    Construction checks only structure (2-D, non-negative integer labels).
    Semantic invariants (labels covered by the class table, index 0 never
    listed) are reported by :func:`validate_change_mask` as findings.
    """

    labels: np.ndarray
    class_table: tuple[ClassEntry, ...]

    def __post_init__(self):
        labels = _frozen_array(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise ShapeMismatch(f"label raster must be a non-empty 2-D raster, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError(f"label raster must be integer-typed, got {labels.dtype}")
        if np.issubdtype(labels.dtype, np.signedinteger) and labels.size and int(labels.min()) < 0:
            raise ValueError("label raster contains negative values")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_table", tuple(self.class_table))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def class_mask(self, index: int) -> BinaryMask:
        return BinaryMask.from_array(self.labels == index)

    def present_class_indices(self) -> list[int]:
        values = np.unique(self.labels)
        return [int(v) for v in values if v != 0]


@dataclass(frozen=True)
class ValidationFinding:
    """One invariant violation, with enough location to debug the mask."""

    code: str
    message: str
    class_index: int | None = None
    pixel: tuple[int, int] | None = None


def validate_change_mask(mask: ChangeMask) -> list[ValidationFinding]:
    """Check ChangeMask invariants, returning one finding per violation.

    An empty list means the mask is valid; an all-zero raster with an empty
    class table is a legitimate "no change" sample.
    """
    findings: list[ValidationFinding] = []
    seen: set[int] = set()
    for entry in mask.class_table:
        if entry.index == 0:
            findings.append(ValidationFinding(
                code="reserved_index",
                message=f"class_table entry {entry.category!r}/{entry.change_type!r} uses reserved index 0",
                class_index=0,
            ))
        if entry.index in seen:
            findings.append(ValidationFinding(
                code="duplicate_index",
                message=f"class_table lists index {entry.index} more than once",
                class_index=entry.index,
            ))
        seen.add(entry.index)
    for value in mask.present_class_indices():
        if value not in seen:
            ys, xs = np.nonzero(mask.labels == value)
            findings.append(ValidationFinding(
                code="unknown_label",
                message=f"label {value} has no class_table entry (first at x={int(xs[0])}, y={int(ys[0])})",
                class_index=value,
                pixel=(int(xs[0]), int(ys[0])),
            ))
    return findings


def decompose(mask: ChangeMask) -> list[tuple[ClassEntry, BinaryMask]]:
    """Split a labelled mask into one binary mask per class-table entry."""
    return [(entry, mask.class_mask(entry.index)) for entry in mask.class_table]


def recompose(width: int, height: int, parts: list[tuple[ClassEntry, BinaryMask]]) -> ChangeMask:
    """Rebuild a labelled mask from per-class binary masks.

    Parts must be pixel-disjoint; overlapping foreground raises ValueError.
    """
    max_index = max((entry.index for entry, _ in parts), default=0)
    dtype = np.uint8 if max_index <= 255 else np.uint16
    labels = np.zeros((height, width), dtype=dtype)
    for entry, part in parts:
        if part.bits.shape != (height, width):
            raise ShapeMismatch(f"part for class {entry.index} has shape {part.bits.shape}, expected {(height, width)}")
        if np.any(labels[part.bits]):
            raise ValueError(f"class {entry.index} overlaps previously placed foreground")
        labels[part.bits] = entry.index
    return ChangeMask(labels=labels, class_table=tuple(entry for entry, _ in parts))


@dataclass(frozen=True)
class SemanticQuadruple:
    """Structured description of one change class within one image."""

    location: Direction
    quantity: Quantity
    category: str
    change_type: str
    pixel_count: int
    centroid: tuple[float, float]

    def __post_init__(self):
        if self.pixel_count < 1:
            raise ValueError("quadruples describe non-empty regions; pixel_count must be >= 1")


@dataclass(frozen=True)
class TextDescription:
    """A rendered sentence plus the data it was rendered from.

    ``template_id`` 1..5 names one of the sentence templates; 0 is reserved
    for the fixed sentences ("no change" and the attribute-free variant),
    which carry no template and may carry no quadruple.
    """

    sentence: str
    template_id: int
    quadruple: SemanticQuadruple | None
    rng_seed_used: int

    def __post_init__(self):
        if not 0 <= self.template_id <= 5:
            raise ValueError(f"template_id must be in 0..5, got {self.template_id}")
        if self.template_id > 0 and self.quadruple is None:
            raise ValueError("templated sentences must reference their quadruple")


@dataclass(frozen=True)
class EmbeddingBatch:
    """Dense batch of row embeddings (one row per sample), float64."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch(f"embedding batch must be a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding batch contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LossWeights:
    """Loss mixing weights and the contrastive temperature."""

    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.3
    lambda_: float = 0.5
    tau: float = 0.7

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lambda_"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


@dataclass(frozen=True)
class ScdConfusion:
    """(n+1)x(n+1) confusion matrix; row = ground truth, column = prediction.

    Index 0 is the no-change class. Cells are int64 so that large datasets
    (1e5 images of 512x512 pixels) cannot overflow the counts.
    """

    n_classes: int
    cells: np.ndarray

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        cells = _frozen_array(self.cells, dtype=np.int64)
        side = self.n_classes + 1
        if cells.shape != (side, side):
            raise ShapeMismatch(f"confusion cells must be {side}x{side}, got {cells.shape}")
        if cells.size and int(cells.min()) < 0:
            raise ValueError("confusion cells must be non-negative")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def zeros(cls, n_classes: int) -> "ScdConfusion":
        side = n_classes + 1
        return cls(n_classes=n_classes, cells=np.zeros((side, side), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.cells.sum())

    def add(self, other: "ScdConfusion") -> "ScdConfusion":
        """Cell-wise merge of two partial confusions over the same classes."""
        if other.n_classes != self.n_classes:
            raise ShapeMismatch(f"cannot merge confusions over {self.n_classes} and {other.n_classes} classes")
        return ScdConfusion(n_classes=self.n_classes, cells=self.cells + other.cells)
