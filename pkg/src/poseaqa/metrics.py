"""Evaluation metrics: Spearman rank correlation, relative L2 distance,
average stage IoU at a threshold, and mean squared error."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError


class _Undefined:
    """Result of a correlation whose value does not exist (constant input)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "undefined"

    __str__ = __repr__

    def __bool__(self):
        return False


UNDEFINED = _Undefined()


def _pair(truths, preds, min_len):
    y = np.asarray(truths, dtype=np.float64).ravel()
    p = np.asarray(preds, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ContractError(f"length mismatch: {y.size} truths vs {p.size} predictions")
    if y.size < min_len:
        raise ContractError(f"need at least {min_len} pairs, got {y.size}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
        raise ContractError("scores must be finite")
    return y, p


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    sx = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srcc(truths: Sequence[float], preds: Sequence[float]):
    """Pearson correlation of average ranks. Constant input gives ``UNDEFINED``."""
    y, p = _pair(truths, preds, 2)
    ry, rp = average_ranks(y), average_ranks(p)
    dy, dp = ry - ry.mean(), rp - rp.mean()
    vy, vp = np.sum(dy * dy), np.sum(dp * dp)
    if vy == 0 or vp == 0:
        return UNDEFINED
    return float(np.clip(np.sum(dy * dp) / np.sqrt(vy * vp), -1.0, 1.0))


def relative_l2(truths, preds, y_min: float, y_max: float) -> float:
    """Mean |y - y_hat| / (y_max - y_min)."""
    if not y_max > y_min:
        raise ContractError(f"score range must be positive, got [{y_min}, {y_max}]")
    y, p = _pair(truths, preds, 1)
    return float(np.mean(np.abs(y - p)) / (y_max - y_min))


def mse(truths, preds) -> float:
    y, p = _pair(truths, preds, 1)
    return float(np.mean((y - p) ** 2))


def _check_boundaries(b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size < 2 or np.any(np.diff(b) <= 0):
        raise ContractError(f"stage boundaries must be strictly increasing with at least one stage, got {b.tolist()}")
    return b


def interval_iou(a0: float, a1: float, b0: float, b1: float) -> float:
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    return inter / ((a1 - a0) + (b1 - b0) - inter)


def stage_iou(pred_boundaries, gt_boundaries) -> float:
    """Mean 1-D IoU over the K stages [t_{k-1}, t_k] of one sample."""
    p, g = _check_boundaries(pred_boundaries), _check_boundaries(gt_boundaries)
    if p.size != g.size:
        raise ContractError(f"stage count differs: {p.size - 1} predicted vs {g.size - 1} ground truth")
    ious = [interval_iou(p[k], p[k + 1], g[k], g[k + 1]) for k in range(p.size - 1)]
    return float(np.mean(ious))


def aiou(pred_boundaries, gt_boundaries, d: float) -> float:
    """Fraction of samples whose mean stage IoU is at least ``d``.

    Each argument is a list of per-sample boundary lists ``[0, t_1, ..., T]``.
    """
    if len(pred_boundaries) != len(gt_boundaries) or len(pred_boundaries) == 0:
        raise ContractError("need the same non-zero number of predicted and ground-truth samples")
    hits = [stage_iou(p, g) >= d for p, g in zip(pred_boundaries, gt_boundaries)]
    return float(np.mean(hits))


def format_table(srcc_value, rl2: float | None, aiou5: float | None, aiou75: float | None) -> str:
    """Two-line summary: SRCC, R_L2 (x100), AIoU@0.5 / @0.75 in percent."""
    def f(v, fmt):
        return "-" if v is None else (str(v) if v is UNDEFINED else format(v, fmt))

    header = f"{'SRCC':>9}  {'R_L2(x100)':>10}  {'AIoU@0.5':>9}  {'AIoU@0.75':>9}"
    row = (f"{f(srcc_value, '.4f'):>9}  {f(None if rl2 is None else rl2 * 100, '.4f'):>10}  "
           f"{f(None if aiou5 is None else aiou5 * 100, '.2f'):>9}  {f(None if aiou75 is None else aiou75 * 100, '.2f'):>9}")
    return header + "\n" + row
