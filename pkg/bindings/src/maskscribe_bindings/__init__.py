"""Array-protocol bindings over the maskscribe engines.

Thin wrappers that accept anything exposing the buffer protocol (numpy
arrays, memoryviews, bytearrays) and return plain dicts, floats and
ndarrays, so training pipelines can consume the library without touching
its domain types. Inputs are used zero-copy when they are already
contiguous with the expected element type; strided views are copied.

No state is held between calls: every function is a pure pass-through to
the core package, so results are bit-identical to direct core calls and
the module is safe to use from multiple threads.
"""

from __future__ import annotations

import numpy as np

import maskscribe
from maskscribe.alignment import (
    attention,
    contrastive_alignment,
    contrastive_loss,
    dice_loss,
    dice_loss_grad,
    focal_loss,
    focal_loss_grad,
    fuse,
    lovasz_loss,
    lovasz_loss_grad,
    seg_loss,
    seg_loss_grad,
    similarity_matrix,
)
from maskscribe.core_types import ChangeMask, ClassEntry, Direction, LossWeights, Quantity, ScdConfusion, SemanticQuadruple
from maskscribe.dataset_io import apply_overrides, build_multimodal_dataset, load_manifest
from maskscribe.metrics import accumulate, binary_metrics, scd_metrics
from maskscribe.templates import AttributeSelection, Vocabulary, parse_description, render, select_template
from maskscribe.transcriber import QuantityThresholds, class_transcriptions

__version__ = maskscribe.__version__

__all__ = [
    "__version__",
    "as_mask_array",
    "as_tensor_array",
    "py_attention",
    "py_binary_metrics",
    "py_build_dataset",
    "py_confusion",
    "py_contrastive",
    "py_fuse",
    "py_losses",
    "py_parse_description",
    "py_render",
    "py_scd_metrics",
    "py_select_template",
    "py_total_loss",
    "py_transcribe",
]


def as_mask_array(labels) -> np.ndarray:
    """Coerce a buffer-protocol object to a contiguous 2-D uint8 array.

    Zero-copy when the input is already a contiguous uint8 array; strided
    input is copied to contiguous. Any other element type is a TypeError.
    """
    arr = np.asarray(labels)
    if arr.dtype != np.uint8:
        raise TypeError(f"mask arrays must be uint8, got {arr.dtype}")
    if arr.ndim != 2:
        raise TypeError(f"mask arrays must be 2-D, got {arr.ndim} dims")
    return np.ascontiguousarray(arr)


def as_tensor_array(values, name: str = "tensor") -> np.ndarray:
    """Coerce a buffer-protocol object to a contiguous float64 array."""
    arr = np.asarray(values)
    if arr.dtype != np.float64:
        raise TypeError(f"{name} must be float64, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def _as_target(target) -> np.ndarray:
    arr = np.asarray(target)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"targets must be integer-typed, got {arr.dtype}")
    return np.ascontiguousarray(arr)


def _class_table(palette) -> tuple[ClassEntry, ...]:
    if hasattr(palette, "items"):
        items = [(int(index), pair) for index, pair in palette.items()]
    else:
        items = [(int(index), (category, change_type)) for index, category, change_type in palette]
    return tuple(ClassEntry(index=index, category=str(pair[0]), change_type=str(pair[1]))
                 for index, pair in items)


def _quadruple_record(class_index: int, quad: SemanticQuadruple) -> dict:
    return {
        "class_index": class_index,
        "location": quad.location.value,
        "quantity": quad.quantity.value,
        "category": quad.category,
        "change_type": quad.change_type,
        "pixel_count": quad.pixel_count,
        "centroid": (quad.centroid[0], quad.centroid[1]),
    }


def py_transcribe(labels, palette, thresholds=(800, 4000, 8000)) -> list[dict]:
    """Transcribe a label raster into quadruple records.

    ``palette`` maps class index -> (category, change_type) (mapping order
    decides output order) or is an iterable of (index, category, type)
    triples. Empty classes are skipped, exactly like the core engine.
    """
    mask = ChangeMask(labels=as_mask_array(labels), class_table=_class_table(palette))
    t1, t2, t3 = thresholds
    rows = class_transcriptions(mask, QuantityThresholds(t1=int(t1), t2=int(t2), t3=int(t3)))
    return [_quadruple_record(row.entry.index, row.quadruple)
            for row in rows if row.quadruple is not None]


def py_select_template(seed: int, image_id: str, class_index: int) -> int:
    return select_template(seed, image_id, class_index)


def py_render(record: dict, template_id: int, attrs=None, rng_seed_used: int = 0) -> str:
    """Render a quadruple record (as returned by py_transcribe) to a sentence."""
    quad = SemanticQuadruple(
        location=Direction(record["location"]),
        quantity=Quantity(record["quantity"]),
        category=record["category"],
        change_type=record["change_type"],
        pixel_count=int(record.get("pixel_count", 1)),
        centroid=tuple(record.get("centroid", (0.0, 0.0))),
    )
    selection = AttributeSelection.from_names(attrs) if attrs is not None else AttributeSelection()
    return render(quad, template_id, selection, rng_seed_used=rng_seed_used).sentence


def py_parse_description(sentence: str, categories=None, types=None) -> dict:
    vocabulary = Vocabulary(
        categories=tuple(categories) if categories else Vocabulary().categories,
        change_types=tuple(types) if types else Vocabulary().change_types,
    )
    parsed = parse_description(sentence, vocabulary)
    return {
        "template_id": parsed.template_id,
        "kind": parsed.kind,
        "quantity": parsed.quantity.value if parsed.quantity else None,
        "change_type": parsed.change_type,
        "category": parsed.category,
        "location": parsed.location.value if parsed.location else None,
    }


def _weights(weights) -> LossWeights:
    if weights is None:
        return LossWeights()
    if isinstance(weights, LossWeights):
        return weights
    return LossWeights(**dict(weights))


def py_losses(p, target, weights=None, gamma_f: float = 2.0, alpha_f=None,
              epsilon: float = 1e-6, with_grads: bool = False) -> dict:
    """Segmentation losses (and optionally their gradients) as plain floats."""
    p = as_tensor_array(p, "probability map")
    target = _as_target(target)
    w = _weights(weights)
    out = {
        "focal": focal_loss(p, target, gamma_f, alpha_f),
        "dice": dice_loss(p, target, epsilon),
        "lovasz": lovasz_loss(p, target),
    }
    out["seg"] = w.alpha * out["focal"] + w.beta * out["dice"] + w.gamma * out["lovasz"]
    if with_grads:
        out["grads"] = {
            "focal": focal_loss_grad(p, target, gamma_f, alpha_f),
            "dice": dice_loss_grad(p, target, epsilon),
            "lovasz": lovasz_loss_grad(p, target),
            "seg": seg_loss_grad(p, target, w, gamma_f, alpha_f, epsilon),
        }
    return out


def py_contrastive(r_i, r_t, tau: float = 0.7, normalize: bool = True,
                   with_grads: bool = False) -> dict:
    """Bidirectional contrastive loss over two embedding batches."""
    r_i = as_tensor_array(r_i, "R_I")
    r_t = as_tensor_array(r_t, "R_T")
    if with_grads:
        losses, d_ri, d_rt = contrastive_alignment(r_i, r_t, tau=tau, normalize=normalize)
        return {"vt": losses.vt, "tv": losses.tv, "cot": losses.cot,
                "grads": {"r_i": d_ri, "r_t": d_rt}}
    losses = contrastive_loss(similarity_matrix(r_i, r_t, tau=tau, normalize=normalize))
    return {"vt": losses.vt, "tv": losses.tv, "cot": losses.cot}


def py_seg_loss(p, target, weights=None, gamma_f: float = 2.0, alpha_f=None,
                epsilon: float = 1e-6) -> float:
    return seg_loss(as_tensor_array(p, "probability map"), _as_target(target),
                    _weights(weights), gamma_f, alpha_f, epsilon)


def py_total_loss(seg: float, cot: float, lambda_: float = 0.5) -> float:
    return float(seg) + lambda_ * float(cot)


def py_attention(q, k, v) -> np.ndarray:
    return attention(as_tensor_array(q, "Q"), as_tensor_array(k, "K"), as_tensor_array(v, "V"))


def py_fuse(r_i, r_t, w_q, w_k, w_v, w_b) -> np.ndarray:
    return fuse(*(as_tensor_array(x, name) for x, name in
                  ((r_i, "R_I"), (r_t, "R_T"), (w_q, "W_q"), (w_k, "W_k"), (w_v, "W_v"), (w_b, "W_b"))))


def py_build_dataset(config_path, out_dir, seed=None, attrs=None, jobs: int = 1,
                     fail_fast: bool = False, figures: bool = False) -> dict:
    """Run the full dataset build; returns the summary report dict."""
    manifest = load_manifest(config_path)
    manifest = apply_overrides(manifest, seed=seed, attrs_names=attrs)
    result = build_multimodal_dataset(manifest, out_dir, jobs=jobs,
                                      fail_fast=fail_fast, make_figures=figures)
    report = dict(result.report)
    report["jsonl_path"] = str(result.jsonl_path)
    report["report_path"] = str(result.report_path)
    return report


def py_confusion(pred, gt, n_classes: int, cells=None) -> np.ndarray:
    """Accumulate one prediction/ground-truth pair into confusion cells."""
    base = ScdConfusion.zeros(n_classes) if cells is None else ScdConfusion(
        n_classes=n_classes, cells=np.asarray(cells, dtype=np.int64))
    updated = accumulate(as_mask_array(pred), as_mask_array(gt), base)
    return np.array(updated.cells)


def py_scd_metrics(cells, average: str = "class") -> dict:
    cells = np.asarray(cells, dtype=np.int64)
    conf = ScdConfusion(n_classes=cells.shape[0] - 1, cells=cells)
    return scd_metrics(conf, average=average)._asdict()


def py_binary_metrics(cells) -> dict:
    cells = np.asarray(cells, dtype=np.int64)
    conf = ScdConfusion(n_classes=cells.shape[0] - 1, cells=cells)
    return binary_metrics(conf)._asdict()
