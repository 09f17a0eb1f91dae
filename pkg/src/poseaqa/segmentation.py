"""Procedure segmentation: Bi-GRU transition heads, monotone decoding,
cross-entropy loss and stage-wise token resampling.

Each of the K-1 heads is a softmax over frames giving the probability that
the corresponding stage transition happens at that frame. A transition at
frame t means frame t is the first frame of the next stage.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numcore as nc
from .errors import ContractError


@dataclass
class TransitionPrediction:
    prob_maps: np.ndarray  # (K-1, T), each row a distribution over frames
    transitions: tuple[int, ...]
    fallback: bool = False

    def boundaries(self) -> list[int]:
        T = self.prob_maps.shape[-1]
        return [0, *self.transitions, T]


def init_params(rng: np.random.Generator, d_in: int = 64, hidden: int = 32, n_stages: int = 3) -> dict[str, nc.Tensor]:
    p = {}
    for d in ("fwd", "bwd"):
        p[f"{d}.w_ih"] = nc.init_weight(rng, (d_in, 3 * hidden), d_in)
        p[f"{d}.w_hh"] = nc.init_weight(rng, (hidden, 3 * hidden), hidden)
        p[f"{d}.b_ih"] = nc.zeros(3 * hidden)
        p[f"{d}.b_hh"] = nc.zeros(3 * hidden)
    p["head.w"] = nc.init_weight(rng, (2 * hidden, n_stages - 1), 2 * hidden)
    p["head.b"] = nc.zeros(n_stages - 1)
    return p


def _gru_params(params, d):
    return {k: params[f"{d}.{k}"] for k in ("w_ih", "w_hh", "b_ih", "b_hh")}


def bigru(x: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """(..., T, D) -> (..., T, 2H): forward and backward states concatenated per frame."""
    T = x.shape[-2]
    H = params["fwd.w_hh"].shape[0]
    lead = x.shape[:-2]
    outs = {}
    for d, order in (("fwd", range(T)), ("bwd", range(T - 1, -1, -1))):
        gp = _gru_params(params, d)
        h = nc.Tensor(np.zeros(lead + (H,)))
        states = [None] * T
        for t in order:
            h = nc.gru_cell(x[..., t, :], h, gp)
            states[t] = h
        outs[d] = nc.stack(states, axis=-2)
    return nc.concat([outs["fwd"], outs["bwd"]], axis=-1)


def transition_logits(f_dy: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """(..., T, D) -> (..., K-1, T) per-head frame logits."""
    h = bigru(f_dy, params)
    return nc.linear(h, params["head.w"], params["head.b"]).swapaxes(-1, -2)


def transition_probs(f_dy: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    return nc.softmax(transition_logits(f_dy, params), axis=-1)


def equal_transitions(n_frames: int, n_stages: int) -> tuple[int, ...]:
    return tuple(int(round(k * n_frames / n_stages)) for k in range(1, n_stages))


def decode_transitions(prob_maps: np.ndarray) -> TransitionPrediction:
    """Sequential argmax: head h takes the best frame after head h-1's pick.

    Ties go to the smallest frame index. If a head runs out of frames the
    result falls back to equal-length stages and is flagged.
    """
    prob_maps = np.asarray(prob_maps, dtype=np.float64)
    if prob_maps.ndim != 2:
        raise ContractError(f"prob_maps must be (K-1, T), got {prob_maps.shape}")
    n_heads, T = prob_maps.shape
    if T < n_heads + 1:
        raise ContractError(f"{n_heads + 1} stages need at least {n_heads + 1} frames, got {T}")
    picks = []
    prev = 0
    for h in range(n_heads):
        lo = prev + 1
        if lo > T - 1:
            return TransitionPrediction(prob_maps, equal_transitions(T, n_heads + 1), fallback=True)
        t = lo + int(np.argmax(prob_maps[h, lo:]))
        picks.append(t)
        prev = t
    return TransitionPrediction(prob_maps, tuple(picks))


def predict_transitions(f_dy: nc.Tensor, params: dict[str, nc.Tensor]) -> TransitionPrediction | list[TransitionPrediction]:
    n_stages = params["head.w"].shape[1] + 1
    T = f_dy.shape[-2]
    if T < n_stages:
        raise ContractError(f"need at least K={n_stages} frames, got {T}")
    with nc.no_grad():
        probs = transition_probs(f_dy, params).data
    if probs.ndim == 2:
        return decode_transitions(probs)
    return [decode_transitions(p) for p in probs.reshape((-1,) + probs.shape[-2:])]


def check_transitions(transitions: Sequence[int], n_frames: int) -> None:
    t = list(transitions)
    if any(not (1 <= x <= n_frames - 1) for x in t) or any(b <= a for a, b in zip(t, t[1:])):
        raise ContractError(f"transitions {t} must be strictly increasing within [1, {n_frames - 1}]")


def _gather_gt(T: int, gt) -> tuple[np.ndarray, int]:
    gt = np.asarray(gt, dtype=np.intp)
    if gt.ndim == 0:
        raise ContractError("ground-truth transitions must be a sequence")
    # explicit row count: reshape(-1, 0) is ambiguous when K = 1
    rows = gt.reshape(int(np.prod(gt.shape[:-1])), gt.shape[-1])
    for r in rows:
        check_transitions(r, T)
    return gt, rows.shape[0]


def segmentation_loss(prob_maps: nc.Tensor, gt_transitions) -> nc.Tensor:
    """Sum over heads of -log p[h, gt_h]; batched input is averaged over samples."""
    T = prob_maps.shape[-1]
    gt, n = _gather_gt(T, gt_transitions)
    if prob_maps.shape[-2] == 0:
        return nc.Tensor(0.0)
    p = nc.reshape(prob_maps, (-1,) + prob_maps.shape[-2:])
    heads = prob_maps.shape[-2]
    picked = p[np.repeat(np.arange(n), heads), np.tile(np.arange(heads), n), gt.reshape(-1)]
    return nc.tsum(nc.log(picked)) * (-1.0 / n)


def segmentation_loss_from_logits(logits: nc.Tensor, gt_transitions) -> nc.Tensor:
    """Same value as ``segmentation_loss(softmax(logits))`` computed stably."""
    T = logits.shape[-1]
    gt, n = _gather_gt(T, gt_transitions)
    if logits.shape[-2] == 0:
        return nc.Tensor(0.0)
    lp = nc.reshape(nc.log_softmax(logits, axis=-1), (-1,) + logits.shape[-2:])
    heads = logits.shape[-2]
    picked = lp[np.repeat(np.arange(n), heads), np.tile(np.arange(heads), n), gt.reshape(-1)]
    return nc.tsum(picked) * (-1.0 / n)


def resample_matrix(n_frames: int, transitions: Sequence[int], tokens: int) -> np.ndarray:
    """(K * tokens, T) linear-interpolation weights; stage k spans [t_{k-1}, t_k)."""
    check_transitions(transitions, n_frames)
    bounds = [0, *transitions, n_frames]
    K = len(bounds) - 1
    W = np.zeros((K * tokens, n_frames))
    for k in range(K):
        a, b = bounds[k], bounds[k + 1]
        L = b - a
        if tokens == 1:
            pos = np.array([a + (L - 1) / 2.0])
        else:
            pos = a + np.arange(tokens) * ((L - 1) / (tokens - 1))
        for j, p in enumerate(pos):
            i0 = min(int(np.floor(p)), b - 1)
            frac = p - i0
            row = k * tokens + j
            W[row, i0] += 1.0 - frac
            if frac > 0:
                W[row, i0 + 1] += frac
    return W


def pool_stage_features(stream: nc.Tensor, transitions, tokens: int = 5) -> nc.Tensor:
    """(T, D) -> (K, tokens, D), or batched (B, T, D) with per-sample transitions -> (B, K, tokens, D)."""
    T, D = stream.shape[-2:]
    if stream.ndim == 2:
        W = resample_matrix(T, transitions, tokens)
        K = W.shape[0] // tokens
        return nc.reshape(nc.matmul(nc.Tensor(W), stream), (K, tokens, D))
    B = stream.shape[0]
    if len(transitions) != B:
        raise ContractError(f"{len(transitions)} transition lists for a batch of {B}")
    W = np.stack([resample_matrix(T, t, tokens) for t in transitions])
    K = W.shape[1] // tokens
    return nc.reshape(nc.matmul(nc.Tensor(W), stream), (B, K, tokens, D))
