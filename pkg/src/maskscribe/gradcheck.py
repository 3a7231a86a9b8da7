"""Central-difference verification of every analytic gradient.

Each checked operation is reduced to a scalar (losses directly, tensor
outputs through a fixed random cotangent) and its closed-form gradient is
compared entry-wise against (f(x+h) - f(x-h)) / 2h. The Lovasz term is
piecewise linear, so cases whose per-class error sort has near-ties are
skipped and counted rather than checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import alignment
from .core_types import LossWeights
from .errors import NonFiniteGradient

# Keeps finite-difference round-off from dominating near-zero entries.
REL_ERR_FLOOR = 1e-3

CHECKED_OPS = ("attention", "fuse", "focal", "dice", "lovasz", "seg", "contrastive", "total")


@dataclass
class GradCase:
    arrays: dict[str, np.ndarray]
    value_fn: Callable[[dict[str, np.ndarray]], float]
    grad_fn: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]]
    usable: bool = True


def central_difference(value_fn, arrays: dict[str, np.ndarray], h: float) -> dict[str, np.ndarray]:
    """Numeric gradient of value_fn for every entry of every array."""
    grads = {}
    for name, arr in arrays.items():
        work = {k: (v.copy() if k == name else v) for k, v in arrays.items()}
        target = work[name]
        grad = np.zeros_like(arr, dtype=np.float64)
        flat = target.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = value_fn(work)
            flat[i] = original - h
            minus = value_fn(work)
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(REL_ERR_FLOOR, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def _min_sort_gap(p: np.ndarray, target: np.ndarray) -> float:
    """Smallest gap between adjacent sorted Lovasz errors over present classes."""
    gap = np.inf
    for c in np.unique(target):
        fg = (target == int(c)).astype(np.float64)
        errors = np.sort(np.abs(fg - p[int(c)]))
        if len(errors) > 1:
            gap = min(gap, float(np.min(np.diff(errors))))
    return gap


def _softmax_cols(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def _prob_case(rng, n_classes=3, n_pixels=8):
    p = _softmax_cols(rng.standard_normal((n_classes, n_pixels)))
    target = rng.integers(0, n_classes, size=n_pixels)
    return p, target


def _make_case(op: str, rng: np.random.Generator, h: float) -> GradCase:
    if op == "attention":
        arrays = {
            "q": 0.7 * rng.standard_normal((3, 4)),
            "k": 0.7 * rng.standard_normal((5, 4)),
            "v": 0.7 * rng.standard_normal((5, 6)),
        }
        g = rng.standard_normal((3, 6))
        return GradCase(
            arrays=arrays,
            value_fn=lambda a: float((alignment.attention(a["q"], a["k"], a["v"]) * g).sum()),
            grad_fn=lambda a: dict(zip(("q", "k", "v"), alignment.attention_vjp(a["q"], a["k"], a["v"], g))),
        )
    if op == "fuse":
        arrays = {
            "r_i": 0.7 * rng.standard_normal((3, 4)),
            "r_t": 0.7 * rng.standard_normal((4, 5)),
            "w_q": 0.7 * rng.standard_normal((4, 3)),
            "w_k": 0.7 * rng.standard_normal((5, 3)),
            "w_v": 0.7 * rng.standard_normal((5, 6)),
            "w_b": 0.7 * rng.standard_normal((4, 6)),
        }
        g = rng.standard_normal((3, 6))
        return GradCase(
            arrays=arrays,
            value_fn=lambda a: float((alignment.fuse(a["r_i"], a["r_t"], a["w_q"], a["w_k"], a["w_v"], a["w_b"]) * g).sum()),
            grad_fn=lambda a: alignment.fuse_vjp(a["r_i"], a["r_t"], a["w_q"], a["w_k"], a["w_v"], a["w_b"], g),
        )
    if op in ("focal", "dice", "lovasz", "seg"):
        p, target = _prob_case(rng)
        value_fns = {
            "focal": lambda a: alignment.focal_loss(a["p"], target),
            "dice": lambda a: alignment.dice_loss(a["p"], target),
            "lovasz": lambda a: alignment.lovasz_loss(a["p"], target),
            "seg": lambda a: alignment.seg_loss(a["p"], target),
        }
        grad_fns = {
            "focal": lambda a: {"p": alignment.focal_loss_grad(a["p"], target)},
            "dice": lambda a: {"p": alignment.dice_loss_grad(a["p"], target)},
            "lovasz": lambda a: {"p": alignment.lovasz_loss_grad(a["p"], target)},
            "seg": lambda a: {"p": alignment.seg_loss_grad(a["p"], target)},
        }
        usable = op in ("focal", "dice") or _min_sort_gap(p, target) > 100.0 * h
        return GradCase(arrays={"p": p}, value_fn=value_fns[op], grad_fn=grad_fns[op], usable=usable)
    if op == "contrastive":
        arrays = {
            "r_i": rng.standard_normal((4, 8)),
            "r_t": rng.standard_normal((4, 8)),
        }

        def value_fn(a):
            losses, _, _ = alignment.contrastive_alignment(a["r_i"], a["r_t"])
            return losses.cot

        def grad_fn(a):
            _, d_ri, d_rt = alignment.contrastive_alignment(a["r_i"], a["r_t"])
            return {"r_i": d_ri, "r_t": d_rt}

        return GradCase(arrays=arrays, value_fn=value_fn, grad_fn=grad_fn)
    if op == "total":
        arrays = {"seg": rng.random(1) + 0.1, "cot": rng.random(1) + 0.1}
        weights = LossWeights()
        return GradCase(
            arrays=arrays,
            value_fn=lambda a: alignment.total_loss(float(a["seg"][0]), float(a["cot"][0]), weights),
            grad_fn=lambda a: {"seg": np.array([1.0]), "cot": np.array([weights.lambda_])},
        )
    raise ValueError(f"unknown op {op!r}; expected one of {CHECKED_OPS}")


def check_case(case: GradCase, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    analytic = case.grad_fn(case.arrays)
    for name, grad in analytic.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"analytic gradient for {name!r} is not finite")
    numeric = central_difference(case.value_fn, case.arrays, h)
    return max(relative_error(analytic[name], numeric[name]) for name in case.arrays)


def run_losscheck(ops=None, trials: int = 20, h: float = 1e-5,
                  tolerance: float = 1e-4, seed: int = 0) -> dict:
    """Run the gradient suite and return a JSON-ready report.

    Per op: accepted cases, subgradient skips, and the max relative error.
    The overall ``passed`` flag is the conjunction over all requested ops.
    """
    chosen = tuple(ops) if ops else CHECKED_OPS
    unknown = set(chosen) - set(CHECKED_OPS)
    if unknown:
        raise ValueError(f"unknown ops: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    report = {"h": h, "tolerance": tolerance, "seed": seed, "trials": trials, "ops": {}}
    all_passed = True
    for op in chosen:
        accepted = 0
        skipped = 0
        max_err = 0.0
        attempts = 0
        while accepted < trials and attempts < trials * 10:
            attempts += 1
            case = _make_case(op, rng, h)
            if not case.usable:
                skipped += 1
                continue
            max_err = max(max_err, check_case(case, h))
            accepted += 1
        passed = accepted == trials and max_err < tolerance
        all_passed = all_passed and passed
        report["ops"][op] = {
            "cases": accepted,
            "subgradient_skips": skipped,
            "max_rel_err": max_err,
            "passed": passed,
        }
    report["passed"] = all_passed
    return report
