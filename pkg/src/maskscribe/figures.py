"""Matplotlib rendering: report histograms and pre/post/mask overlay panels."""

from __future__ import annotations

import textwrap
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image, UnidentifiedImageError

from .core_types import ChangeMask, SemanticQuadruple
from .errors import DecodeError

_CLASS_CMAP = plt.get_cmap("tab10")


def save_count_figure(counts: dict[str, int], title: str, path) -> Path:
    """Bar chart of a label histogram, written as a PNG file."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    labels = list(counts.keys())
    ax.bar(range(len(labels)), [counts[k] for k in labels], color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc


def _mask_to_rgb(mask: ChangeMask) -> np.ndarray:
    rgb = np.zeros((mask.height, mask.width, 3), dtype=np.float64)
    for i, entry in enumerate(mask.class_table):
        color = _CLASS_CMAP(i % 10)[:3]
        rgb[mask.labels == entry.index] = color
    return rgb


def _draw_thirds(ax, width: int, height: int) -> None:
    # Pixel centers sit at integer coordinates, so the cell boundaries of
    # the direction grid land at k * size / 3 - 0.5 in display space.
    for k in (1, 2):
        ax.axvline(k * width / 3 - 0.5, color="white", linewidth=0.8, alpha=0.7)
        ax.axhline(k * height / 3 - 0.5, color="white", linewidth=0.8, alpha=0.7)


@dataclass
class OverlayResult:
    path: Path
    marker_colors: list[str]


def render_overlay(pre_path, post_path, mask: ChangeMask,
                   quadruples: list[SemanticQuadruple], description: str,
                   out_path) -> OverlayResult:
    """Side-by-side pre/post/mask panel with grid lines and centroid markers.

    Each quadruple gets one distinct-colored X marker at its centroid on the
    mask panel; the joined description is printed as a caption strip.
    """
    out_path = Path(out_path)
    pre = _load_image(pre_path)
    post = _load_image(post_path)

    fig, axes = plt.subplots(1, 3, figsize=(12.0, 4.8))
    for ax, image, title in ((axes[0], pre, "pre"), (axes[1], post, "post")):
        ax.imshow(image)
        ax.set_title(title, fontsize=10)
    axes[2].imshow(_mask_to_rgb(mask))
    axes[2].set_title("mask", fontsize=10)
    for ax in axes:
        _draw_thirds(ax, mask.width, mask.height)
        ax.set_xticks([])
        ax.set_yticks([])

    marker_colors = []
    for i, quad in enumerate(quadruples):
        color = matplotlib.colors.to_hex(_CLASS_CMAP(i % 10))
        marker_colors.append(color)
        axes[2].plot(quad.centroid[0], quad.centroid[1], marker="x", markersize=11,
                     markeredgewidth=2.5, color=color)

    caption = "\n".join(textwrap.wrap(description, width=110)) or " "
    fig.text(0.5, 0.04, caption, ha="center", va="bottom", fontsize=9)
    fig.subplots_adjust(bottom=0.18, top=0.92, left=0.02, right=0.98, wspace=0.04)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return OverlayResult(path=out_path, marker_colors=marker_colors)


def save_confusion_figure(cells: np.ndarray, path) -> Path:
    """Heatmap of a confusion matrix (rows = ground truth)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    im = ax.imshow(cells, cmap="viridis")
    ax.set_xlabel("prediction")
    ax.set_ylabel("ground truth")
    ax.set_title("confusion")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
