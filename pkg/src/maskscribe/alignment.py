"""Desk-scale numeric core: cross-attention fusion and training losses.

All operations are deterministic float64 functions over plain numpy
arrays (EmbeddingBatch inputs are accepted and unwrapped). Each forward
has a matching closed-form reverse-mode gradient so the semantics can be
verified against finite differences without any autodiff framework.

Shape conventions are row-major: feature vectors are rows, and projection
or bridge weights apply as right matrix factors (``rows @ W``).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core_types import EmbeddingBatch, LossWeights
from .errors import NonPositiveTau, ShapeMismatch

PROB_CLAMP = 1e-7  # bounds log(p) in the focal/cross-entropy path
DICE_EPSILON = 1e-6


def _as_matrix(name: str, x) -> np.ndarray:
    if isinstance(x, EmbeddingBatch):
        return x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _check_prob_shapes(p, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    target = np.asarray(target)
    if p.ndim != 2:
        raise ShapeMismatch(f"probability map must be (classes, pixels), got shape {p.shape}")
    if target.shape != (p.shape[1],):
        raise ShapeMismatch(f"target shape {target.shape} does not match {p.shape[1]} pixels")
    if target.size and (target.min() < 0 or target.max() >= p.shape[0]):
        raise ShapeMismatch(f"target labels must lie in [0, {p.shape[0]})")
    return p, target.astype(np.intp)


def validate_prob_map(p, atol: float = 1e-9) -> None:
    """Check the probability-map contract: entries >= 0, columns sum to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeMismatch(f"probability map must be (classes, pixels), got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("probability map contains negative entries")
    sums = p.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > atol):
        raise ValueError(f"per-pixel probabilities must sum to 1 within {atol}")


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for numerical stability."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_weights(q, k) -> np.ndarray:
    """The softmax(Q K^T / sqrt(d)) weight matrix, rows summing to 1."""
    q = _as_matrix("Q", q)
    k = _as_matrix("K", k)
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatch(f"Q and K feature dims differ: {q.shape[1]} vs {k.shape[1]}")
    return softmax_rows(q @ k.T / np.sqrt(q.shape[1]))


def attention(q, k, v) -> np.ndarray:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d)) V."""
    q = _as_matrix("Q", q)
    k = _as_matrix("K", k)
    v = _as_matrix("V", v)
    if v.shape[0] != k.shape[0]:
        raise ShapeMismatch(f"K and V row counts differ: {k.shape[0]} vs {v.shape[0]}")
    return attention_weights(q, k) @ v


def attention_vjp(q, k, v, g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum(attention(Q,K,V) * G) with respect to Q, K, V."""
    q = _as_matrix("Q", q)
    k = _as_matrix("K", k)
    v = _as_matrix("V", v)
    g = _as_matrix("G", g)
    scale = 1.0 / np.sqrt(q.shape[1])
    weights = softmax_rows(q @ k.T * scale)
    dv = weights.T @ g
    d_weights = g @ v.T
    d_scores = weights * (d_weights - (d_weights * weights).sum(axis=1, keepdims=True))
    dq = d_scores @ k * scale
    dk = d_scores.T @ q * scale
    return dq, dk, dv


def fuse(r_i, r_t, w_q, w_k, w_v, w_b) -> np.ndarray:
    """Cross-attention over projected features plus a bridged visual term.

    Queries come from the visual rows (``r_i @ w_q``), keys and values from
    the text rows; the bridge adds ``r_i @ w_b`` to the attention output.
    """
    r_i = _as_matrix("R_I", r_i)
    r_t = _as_matrix("R_T", r_t)
    w_q = _as_matrix("W_q", w_q)
    w_k = _as_matrix("W_k", w_k)
    w_v = _as_matrix("W_v", w_v)
    w_b = _as_matrix("W_b", w_b)
    if w_q.shape[0] != r_i.shape[1] or w_k.shape[0] != r_t.shape[1] or w_v.shape[0] != r_t.shape[1]:
        raise ShapeMismatch("projection weights do not match the feature dimensions")
    if w_b.shape[0] != r_i.shape[1]:
        raise ShapeMismatch(f"bridge expects {r_i.shape[1]} input features, got {w_b.shape[0]}")
    return attention(r_i @ w_q, r_t @ w_k, r_t @ w_v) + r_i @ w_b


def fuse_vjp(r_i, r_t, w_q, w_k, w_v, w_b, g) -> dict[str, np.ndarray]:
    """Gradients of sum(fuse(...) * G) for every input matrix."""
    r_i = _as_matrix("R_I", r_i)
    r_t = _as_matrix("R_T", r_t)
    w_q = _as_matrix("W_q", w_q)
    w_k = _as_matrix("W_k", w_k)
    w_v = _as_matrix("W_v", w_v)
    w_b = _as_matrix("W_b", w_b)
    g = _as_matrix("G", g)
    q = r_i @ w_q
    k = r_t @ w_k
    v = r_t @ w_v
    dq, dk, dv = attention_vjp(q, k, v, g)
    return {
        "r_i": dq @ w_q.T + g @ w_b.T,
        "r_t": dk @ w_k.T + dv @ w_v.T,
        "w_q": r_i.T @ dq,
        "w_k": r_t.T @ dk,
        "w_v": r_t.T @ dv,
        "w_b": r_i.T @ g,
    }


def _target_probs(p, target, alpha_f):
    c, n = p.shape
    pt = p[target, np.arange(n)]
    clamped = np.clip(pt, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if alpha_f is None:
        at = np.ones(n)
    else:
        alpha_f = np.asarray(alpha_f, dtype=np.float64)
        if alpha_f.shape != (c,):
            raise ShapeMismatch(f"alpha_f must have one weight per class, got shape {alpha_f.shape}")
        at = alpha_f[target]
    return pt, clamped, at


def focal_loss(p, target, gamma_f: float = 2.0, alpha_f=None) -> float:
    """Mean of -alpha_t (1 - p_t)^gamma log(p_t) over pixels.

    p_t is clamped to [PROB_CLAMP, 1 - PROB_CLAMP], which is why a perfect
    prediction scores close to, but not exactly, zero.
    """
    p, target = _check_prob_shapes(p, target)
    _, pt, at = _target_probs(p, target, alpha_f)
    return float(np.mean(-at * (1.0 - pt) ** gamma_f * np.log(pt)))


def focal_loss_grad(p, target, gamma_f: float = 2.0, alpha_f=None) -> np.ndarray:
    """d focal / d p; zero outside target entries and inside the clamp."""
    p, target = _check_prob_shapes(p, target)
    raw, pt, at = _target_probs(p, target, alpha_f)
    n = p.shape[1]
    inside = (raw > PROB_CLAMP) & (raw < 1.0 - PROB_CLAMP)
    one_minus = 1.0 - pt
    d_pt = at * (gamma_f * one_minus ** (gamma_f - 1.0) * np.log(pt) - one_minus ** gamma_f / pt) / n
    grad = np.zeros_like(p)
    grad[target, np.arange(n)] = np.where(inside, d_pt, 0.0)
    return grad


def cross_entropy(p, target) -> float:
    """Mean of -log(p_t); the gamma_f = 0, unit-weight focal special case."""
    p, target = _check_prob_shapes(p, target)
    _, pt, _ = _target_probs(p, target, None)
    return float(np.mean(-np.log(pt)))


def _one_hot(target: np.ndarray, n_classes: int) -> np.ndarray:
    onehot = np.zeros((n_classes, target.shape[0]))
    onehot[target, np.arange(target.shape[0])] = 1.0
    return onehot


def dice_loss(p, target, epsilon: float = DICE_EPSILON) -> float:
    """1 - mean_c (2 sum(p_c t_c) + eps) / (sum p_c + sum t_c + eps)."""
    p, target = _check_prob_shapes(p, target)
    t = _one_hot(target, p.shape[0])
    num = 2.0 * (p * t).sum(axis=1) + epsilon
    den = p.sum(axis=1) + t.sum(axis=1) + epsilon
    return float(1.0 - np.mean(num / den))


def dice_loss_grad(p, target, epsilon: float = DICE_EPSILON) -> np.ndarray:
    p, target = _check_prob_shapes(p, target)
    t = _one_hot(target, p.shape[0])
    num = 2.0 * (p * t).sum(axis=1, keepdims=True) + epsilon
    den = p.sum(axis=1, keepdims=True) + t.sum(axis=1, keepdims=True) + epsilon
    return -(2.0 * t * den - num) / (den * den) / p.shape[0]


def _lovasz_jaccard_grad(gt_sorted: np.ndarray) -> np.ndarray:
    """Discrete gradient of the Jaccard extension along a sorted error run."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    if len(gt_sorted) > 1:
        jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def _present_classes(target: np.ndarray, n_classes: int) -> list[int]:
    return [int(c) for c in np.unique(target) if 0 <= c < n_classes]


def lovasz_loss(p, target) -> float:
    """Lovasz-softmax loss averaged over the classes present in the target.

    Per class, absolute errors |t - p| are sorted descending and dotted
    with the Jaccard-extension gradient of the sorted ground truth.
    """
    p, target = _check_prob_shapes(p, target)
    present = _present_classes(target, p.shape[0])
    losses = []
    for c in present:
        fg = (target == c).astype(np.float64)
        errors = np.abs(fg - p[c])
        order = np.argsort(-errors, kind="stable")
        losses.append(float(errors[order] @ _lovasz_jaccard_grad(fg[order])))
    return float(np.mean(losses))


def lovasz_loss_grad(p, target) -> np.ndarray:
    """Subgradient of the Lovasz-softmax loss (exact away from sort ties)."""
    p, target = _check_prob_shapes(p, target)
    present = _present_classes(target, p.shape[0])
    grad = np.zeros_like(p)
    for c in present:
        fg = (target == c).astype(np.float64)
        errors = np.abs(fg - p[c])
        order = np.argsort(-errors, kind="stable")
        jaccard = _lovasz_jaccard_grad(fg[order])
        # d|fg - p|/dp is -1 on foreground pixels and +1 elsewhere.
        grad[c, order] = jaccard * (1.0 - 2.0 * fg[order])
    return grad / len(present)


def seg_loss(p, target, weights: LossWeights = LossWeights(),
             gamma_f: float = 2.0, alpha_f=None, epsilon: float = DICE_EPSILON) -> float:
    """Weighted sum: alpha * focal + beta * dice + gamma * lovasz."""
    return (weights.alpha * focal_loss(p, target, gamma_f, alpha_f)
            + weights.beta * dice_loss(p, target, epsilon)
            + weights.gamma * lovasz_loss(p, target))


def seg_loss_grad(p, target, weights: LossWeights = LossWeights(),
                  gamma_f: float = 2.0, alpha_f=None, epsilon: float = DICE_EPSILON) -> np.ndarray:
    return (weights.alpha * focal_loss_grad(p, target, gamma_f, alpha_f)
            + weights.beta * dice_loss_grad(p, target, epsilon)
            + weights.gamma * lovasz_loss_grad(p, target))


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _l2_normalize_vjp(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    y = x / norms
    return (g - y * (g * y).sum(axis=1, keepdims=True)) / norms


def similarity_matrix(r_i, r_t, tau: float = 0.7, normalize: bool = True) -> np.ndarray:
    """S[i, j] = (r_i^i . r_t^j) / tau, optionally after row L2 normalization.

    Normalization is on by default (the usual contrastive-pretraining
    convention); pass normalize=False for raw dot products.
    """
    r_i = _as_matrix("R_I", r_i)
    r_t = _as_matrix("R_T", r_t)
    if tau <= 0:
        raise NonPositiveTau(f"temperature must be > 0, got {tau}")
    if r_i.shape != r_t.shape:
        raise ShapeMismatch(f"embedding batches must share (B, d), got {r_i.shape} vs {r_t.shape}")
    if normalize:
        r_i = l2_normalize_rows(r_i)
        r_t = l2_normalize_rows(r_t)
    return r_i @ r_t.T / tau


class ContrastiveLoss(NamedTuple):
    vt: float
    tv: float
    cot: float


def _directional_nce(s: np.ndarray) -> float:
    shifted = s - s.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - np.diag(shifted)))


def contrastive_loss(s) -> ContrastiveLoss:
    """Bidirectional batch-softmax loss over a square similarity matrix.

    vt matches each row's diagonal against the row (vision to text), tv
    the same over columns, and cot is their average. Log-sum-exp uses max
    subtraction, so the result is shift invariant and overflow free.
    """
    s = _as_matrix("S", s)
    if s.shape[0] != s.shape[1]:
        raise ShapeMismatch(f"similarity matrix must be square, got {s.shape}")
    vt = _directional_nce(s)
    tv = _directional_nce(s.T)
    return ContrastiveLoss(vt=vt, tv=tv, cot=0.5 * (vt + tv))


def contrastive_loss_grad(s) -> np.ndarray:
    """d cot / d S: average of row- and column-softmax minus identity, over B."""
    s = _as_matrix("S", s)
    if s.shape[0] != s.shape[1]:
        raise ShapeMismatch(f"similarity matrix must be square, got {s.shape}")
    b = s.shape[0]
    eye = np.eye(b)
    d_vt = (softmax_rows(s) - eye) / b
    d_tv = (softmax_rows(s.T) - eye).T / b
    return 0.5 * (d_vt + d_tv)


def contrastive_alignment(r_i, r_t, tau: float = 0.7, normalize: bool = True):
    """Full path from embeddings to cot, with gradients for both batches."""
    r_i = _as_matrix("R_I", r_i)
    r_t = _as_matrix("R_T", r_t)
    s = similarity_matrix(r_i, r_t, tau=tau, normalize=normalize)
    losses = contrastive_loss(s)
    ds = contrastive_loss_grad(s) / tau
    xi = l2_normalize_rows(r_i) if normalize else r_i
    xt = l2_normalize_rows(r_t) if normalize else r_t
    d_xi = ds @ xt
    d_xt = ds.T @ xi
    if normalize:
        d_xi = _l2_normalize_vjp(r_i, d_xi)
        d_xt = _l2_normalize_vjp(r_t, d_xt)
    return losses, d_xi, d_xt


def total_loss(seg: float, cot: float, weights: LossWeights = LossWeights()) -> float:
    """Training objective: segmentation loss plus lambda-weighted cot."""
    return seg + weights.lambda_ * cot
