"""Stage-wise contrastive loss, cross-attention difference decoding and the
score / splash regression heads.

Stage feature tensors are (..., K, T_s, D): K stages of T_s tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ContractError
from .fusion import merge_heads, split_heads


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractError(f"temperature must be positive, got {self.tau}")


# -- critic / contrastive ---------------------------------------------------

def _embed(x: nc.Tensor, norm_w: nc.Tensor | None, stage_axis_kept: bool) -> nc.Tensor:
    """Apply the learnable map per token, flatten each stage, L2-normalise."""
    y = nc.linear(x, norm_w) if norm_w is not None else x
    if stage_axis_kept:
        y = nc.reshape(y, y.shape[:-2] + (-1,))
    else:
        y = nc.reshape(y, (-1,))
    return nc.l2_normalize(y, axis=-1)


def critic(a: nc.Tensor, b: nc.Tensor, norm_w: nc.Tensor | None = None) -> nc.Tensor:
    """Cosine similarity of norm(a) and norm(b); zero vectors give 0."""
    if a.shape != b.shape:
        raise ContractError(f"critic inputs differ in shape: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = nc.reshape(a, (1, -1)), nc.reshape(b, (1, -1))
    return nc.tsum(_embed(a, norm_w, False) * _embed(b, norm_w, False))


def stage_contrastive_loss(q: nc.Tensor, e: nc.Tensor, norm_w: nc.Tensor | None = None,
                           cfg: ContrastiveConfig = ContrastiveConfig()) -> nc.Tensor:
    """Negated, symmetrised stage-wise contrastive objective.

    Anchor (q, k): positive e_k; negatives e_l and q_l for every l != k.
    Inputs (..., K, T_s, D); batch dims are averaged.
    """
    if q.shape != e.shape:
        raise ContractError(f"query/exemplar stage shapes differ: {q.shape} vs {e.shape}")
    K = q.shape[-3]
    zq = _embed(q, norm_w, True)
    ze = _embed(e, norm_w, True)
    inv_tau = 1.0 / cfg.tau
    e_qe = nc.exp(nc.matmul(zq, ze.swapaxes(-1, -2)) * inv_tau)
    e_qq = nc.exp(nc.matmul(zq, zq.swapaxes(-1, -2)) * inv_tau)
    e_ee = nc.exp(nc.matmul(ze, ze.swapaxes(-1, -2)) * inv_tau)
    eye = np.eye(K)
    off = nc.Tensor(1.0 - eye)
    pos = nc.tsum(e_qe * nc.Tensor(eye), axis=-1)
    zeta_q = nc.tsum((e_qe + e_qq) * off, axis=-1)
    zeta_e = nc.tsum((e_qe.swapaxes(-1, -2) + e_ee) * off, axis=-1)
    ell_q = nc.log(pos / (pos + zeta_q))
    ell_e = nc.log(pos / (pos + zeta_e))
    per_pair = nc.tsum(ell_q + ell_e, axis=-1) * (-1.0 / (2 * K))
    return nc.mean(per_pair)


# -- difference decoder -------------------------------------------------------

def init_decoder(rng: np.random.Generator, d_model: int = 64, ffn_mult: int = 2) -> dict[str, nc.Tensor]:
    D = d_model
    p = {}
    for name in ("q", "k", "v", "out"):
        p[f"{name}.w"] = nc.init_weight(rng, (D, D), D)
        p[f"{name}.b"] = nc.zeros(D)
    for ln in ("ln1", "ln2"):
        p[f"{ln}.g"] = nc.ones(D)
        p[f"{ln}.b"] = nc.zeros(D)
    p["ffn.w1"] = nc.init_weight(rng, (D, ffn_mult * D), D, np.sqrt(2.0))
    p["ffn.b1"] = nc.zeros(ffn_mult * D)
    p["ffn.w2"] = nc.init_weight(rng, (ffn_mult * D, D), ffn_mult * D)
    p["ffn.b2"] = nc.zeros(D)
    return p


def cross_attention(q_src: nc.Tensor, kv_src: nc.Tensor, params: dict[str, nc.Tensor], heads: int = 4,
                    return_attention: bool = False):
    q = split_heads(nc.linear(q_src, params["q.w"], params["q.b"]), heads)
    k = split_heads(nc.linear(kv_src, params["k.w"], params["k.b"]), heads)
    v = split_heads(nc.linear(kv_src, params["v.w"], params["v.b"]), heads)
    d = q.shape[-1]
    alpha = nc.softmax(nc.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d)), axis=-1)
    out = nc.linear(merge_heads(nc.matmul(alpha, v)), params["out.w"], params["out.b"])
    return (out, alpha) if return_attention else out


def decode_difference(query_tokens: nc.Tensor, exemplar_tokens: nc.Tensor, params: dict[str, nc.Tensor],
                      heads: int = 4) -> nc.Tensor:
    """Cross-attention decoder block, queries from the query video, keys and
    values from the exemplar; token mean gives one D-vector per stage.

    (..., K, T_s, D) x2 -> (..., K, D)
    """
    if query_tokens.shape != exemplar_tokens.shape:
        raise ContractError(f"decoder inputs differ: {query_tokens.shape} vs {exemplar_tokens.shape}")
    att = cross_attention(query_tokens, exemplar_tokens, params, heads)
    h = nc.layer_norm(query_tokens + att, params["ln1.g"], params["ln1.b"])
    ff = nc.linear(nc.relu(nc.linear(h, params["ffn.w1"], params["ffn.b1"])), params["ffn.w2"], params["ffn.b2"])
    h = nc.layer_norm(h + ff, params["ln2.g"], params["ln2.b"])
    return nc.mean(h, axis=-2)


# -- regression heads ---------------------------------------------------------

def init_heads(rng: np.random.Generator, d_model: int = 64, hidden: int = 64, n_stages: int = 3) -> dict[str, nc.Tensor]:
    p = {}
    for stream in ("fu", "st"):
        p[f"{stream}.w1"] = nc.init_weight(rng, (d_model, hidden), d_model, np.sqrt(2.0))
        p[f"{stream}.b1"] = nc.zeros(hidden)
        p[f"{stream}.w2"] = nc.init_weight(rng, (hidden, 1), hidden, 0.1)
        p[f"{stream}.b2"] = nc.zeros(1)
    p["stage_logits"] = nc.zeros(n_stages)
    return p


def mlp_head(f: nc.Tensor, params: dict[str, nc.Tensor], stream: str) -> nc.Tensor:
    """(..., D) -> (...,)"""
    h = nc.relu(nc.linear(f, params[f"{stream}.w1"], params[f"{stream}.b1"]))
    y = nc.linear(h, params[f"{stream}.w2"], params[f"{stream}.b2"])
    return nc.reshape(y, y.shape[:-1])


def stage_weights(params: dict[str, nc.Tensor]) -> nc.Tensor:
    return nc.softmax(params["stage_logits"], axis=-1)


def stage_relative_scores(f_fu: nc.Tensor, f_st: nc.Tensor, params: dict[str, nc.Tensor],
                          scale: float = 1.0) -> nc.Tensor:
    """Per-stage M_fu(f_fu^k) + M_st(f_st^k), shape (..., K)."""
    if f_fu.shape != f_st.shape:
        raise ContractError(f"fused/static difference features differ: {f_fu.shape} vs {f_st.shape}")
    rel = mlp_head(f_fu, params, "fu") + mlp_head(f_st, params, "st")
    return rel * scale if scale != 1.0 else rel


def regress_score(f_fu: nc.Tensor, f_st: nc.Tensor, params: dict[str, nc.Tensor], s_exemplar,
                  scale: float = 1.0) -> nc.Tensor:
    """S_e + sum_k lambda_k (M_fu(f_fu^k) + M_st(f_st^k)); lambda = softmax(stage logits)."""
    K = params["stage_logits"].shape[0]
    if f_fu.shape[-2] != K:
        raise ContractError(f"expected {K} stages, got {f_fu.shape[-2]}")
    rel = stage_relative_scores(f_fu, f_st, params, scale)
    return nc.tsum(rel * stage_weights(params), axis=-1) + nc.as_tensor(s_exemplar)


regress_splash = regress_score


# -- objective ----------------------------------------------------------------

def mse(pred: nc.Tensor, target) -> nc.Tensor:
    diff = pred - nc.as_tensor(target)
    return nc.mean(diff * diff)


def total_loss(s_hat: nc.Tensor, s_true, splash_hat: nc.Tensor, splash_true,
               l_ce: nc.Tensor, l_cont: nc.Tensor) -> nc.Tensor:
    """Unit-weighted sum of score MSE, splash MSE, segmentation CE and contrastive terms."""
    terms = {"aqa": mse(s_hat, s_true), "splash": mse(splash_hat, splash_true),
             "ce": nc.as_tensor(l_ce), "cont": nc.as_tensor(l_cont)}
    for name, t in terms.items():
        if not np.all(np.isfinite(t.data)):
            raise ContractError(f"non-finite loss term: {name}")
    return terms["aqa"] + terms["splash"] + terms["ce"] + terms["cont"]
