"""Pose-guided attention fusion of per-stage dynamic visual and skeletal tokens.

Attention logits from the visual stream and the skeletal stream are added
(skeletal term scaled by a learnable rho) before the softmax; values come
from the visual stream only. The block is

    H = MultiHead(alpha, V_dy) + LN(F_dy)
    F_fu = FFN(LN(H)) + H

Inputs may carry any leading batch dims, e.g. (B, K, T_s, D); every stage
goes through the same parameters independently.
"""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .errors import ContractError

VARIANTS = ("weighted", "add", "dot", "visual")


def init_params(rng: np.random.Generator, d_model: int = 64, ffn_mult: int = 2, rho: float = 1.0) -> dict[str, nc.Tensor]:
    D = d_model
    p = {}
    for name in ("q_dy", "k_dy", "v_dy", "q_sk", "k_sk", "out"):
        p[f"{name}.w"] = nc.init_weight(rng, (D, D), D)
        p[f"{name}.b"] = nc.zeros(D)
    p["rho"] = nc.parameter(rho)
    for ln in ("ln1", "ln2"):
        p[f"{ln}.g"] = nc.ones(D)
        p[f"{ln}.b"] = nc.zeros(D)
    p["ffn.w1"] = nc.init_weight(rng, (D, ffn_mult * D), D, np.sqrt(2.0))
    p["ffn.b1"] = nc.zeros(ffn_mult * D)
    p["ffn.w2"] = nc.init_weight(rng, (ffn_mult * D, D), ffn_mult * D)
    p["ffn.b2"] = nc.zeros(D)
    return p


def split_heads(x: nc.Tensor, heads: int) -> nc.Tensor:
    """(..., T, D) -> (..., heads, T, D/heads)"""
    *lead, T, D = x.shape
    if D % heads:
        raise ContractError(f"model width {D} not divisible by {heads} heads")
    y = nc.reshape(x, tuple(lead) + (T, heads, D // heads))
    return y.swapaxes(-2, -3)


def merge_heads(x: nc.Tensor) -> nc.Tensor:
    *lead, h, T, d = x.shape
    return nc.reshape(x.swapaxes(-2, -3), tuple(lead) + (T, h * d))


def _scores(q: nc.Tensor, k: nc.Tensor) -> nc.Tensor:
    d = q.shape[-1]
    return nc.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d))


def attention_terms(f_dy: nc.Tensor, f_sk: nc.Tensor, params: dict[str, nc.Tensor], heads: int = 2):
    """Per-head visual and skeletal logit maps, each (..., heads, T_s, T_s)."""
    q_dy = split_heads(nc.linear(f_dy, params["q_dy.w"], params["q_dy.b"]), heads)
    k_dy = split_heads(nc.linear(f_dy, params["k_dy.w"], params["k_dy.b"]), heads)
    vis = _scores(q_dy, k_dy)
    if f_sk is None:
        return vis, None
    q_sk = split_heads(nc.linear(f_sk, params["q_sk.w"], params["q_sk.b"]), heads)
    k_sk = split_heads(nc.linear(f_sk, params["k_sk.w"], params["k_sk.b"]), heads)
    return vis, _scores(q_sk, k_sk)


def combine_logits(vis: nc.Tensor, skel: nc.Tensor | None, rho: nc.Tensor, variant: str) -> nc.Tensor:
    if variant == "visual" or skel is None:
        return vis
    if variant == "weighted":
        return vis + rho * skel
    if variant == "add":
        return vis + skel
    if variant == "dot":
        return vis * skel
    raise ContractError(f"unknown fusion variant {variant!r}; expected one of {VARIANTS}")


def fuse_stage(f_dy_k: nc.Tensor, f_sk_k: nc.Tensor | None, params: dict[str, nc.Tensor], heads: int = 2,
               variant: str = "weighted", return_attention: bool = False):
    """Fuse aligned stage tokens (..., T_s, D). ``f_sk_k=None`` gives the visual-only block."""
    if f_sk_k is not None and f_sk_k.shape != f_dy_k.shape:
        raise ContractError(f"stage token mismatch: dynamic {f_dy_k.shape} vs skeletal {f_sk_k.shape}")
    vis, skel = attention_terms(f_dy_k, f_sk_k, params, heads)
    alpha = nc.softmax(combine_logits(vis, skel, params["rho"], variant), axis=-1)
    v_dy = split_heads(nc.linear(f_dy_k, params["v_dy.w"], params["v_dy.b"]), heads)
    att = nc.linear(merge_heads(nc.matmul(alpha, v_dy)), params["out.w"], params["out.b"])
    h = att + nc.layer_norm(f_dy_k, params["ln1.g"], params["ln1.b"])
    z = nc.layer_norm(h, params["ln2.g"], params["ln2.b"])
    z = nc.linear(nc.relu(nc.linear(z, params["ffn.w1"], params["ffn.b1"])), params["ffn.w2"], params["ffn.b2"])
    out = z + h
    return (out, alpha) if return_attention else out


def attention_block(f_dy_k: nc.Tensor, params: dict[str, nc.Tensor], heads: int = 2) -> nc.Tensor:
    """Single-stream attention block with the same parameters and layout."""
    return fuse_stage(f_dy_k, None, params, heads, variant="visual")


def fuse_all(dy_stages: nc.Tensor, sk_stages: nc.Tensor, params: dict[str, nc.Tensor], heads: int = 2,
             variant: str = "weighted") -> nc.Tensor:
    """(..., K, T_s, D) for both streams -> fused (..., K, T_s, D)."""
    if dy_stages.shape[:-2] != sk_stages.shape[:-2]:
        raise ContractError(f"stage count mismatch: {dy_stages.shape} vs {sk_stages.shape}")
    return fuse_stage(dy_stages, sk_stages, params, heads, variant)
