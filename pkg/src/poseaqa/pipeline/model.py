"""The full assessment model as a flat, prefixed parameter dict plus the
forward passes used by training and voting inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import fusion, numcore as nc, regression as rg, segmentation as seg, skeleton, visual
from ..errors import ContractError
from .config import Config

PREFIXES = ("dyn", "sta", "skel", "seg", "fuse", "dec_fu", "dec_st", "score", "splash")


def init_model(cfg: Config, rng: np.random.Generator | None = None) -> dict[str, nc.Tensor]:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    D = cfg.d_model
    groups = {
        "dyn": visual.init_dynamic(rng, D),
        "sta": visual.init_static(rng, D),
        "skel": skeleton.init_params(rng, D, cfg.skeleton_width),
        "seg": seg.init_params(rng, D, cfg.seg_hidden, cfg.n_stages),
        "fuse": fusion.init_params(rng, D),
        "dec_fu": rg.init_decoder(rng, D),
        "dec_st": rg.init_decoder(rng, D),
        "score": rg.init_heads(rng, D, cfg.head_hidden, cfg.n_stages),
        "splash": rg.init_heads(rng, D, cfg.head_hidden, cfg.n_stages),
    }
    params = {f"{g}.{k}": v for g, sub in groups.items() for k, v in sub.items()}
    # per-token maps ahead of the contrastive critic, one per stream
    params["norm_fu.w"] = nc.init_weight(rng, (D, D), D)
    params["norm_st.w"] = nc.init_weight(rng, (D, D), D)
    return params


def group(params: dict[str, nc.Tensor], prefix: str) -> dict[str, nc.Tensor]:
    pre = prefix + "."
    return {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}


@dataclass
class Streams:
    """Per-frame features of a batch of clips, each (B, T, D)."""
    dy: nc.Tensor
    st: nc.Tensor
    sk: nc.Tensor


@dataclass
class StageTokens:
    """Per-stage tokens of a batch of clips, each (B, K, T_s, D)."""
    fused: nc.Tensor
    static: nc.Tensor


class Model:
    def __init__(self, cfg: Config, params: dict[str, nc.Tensor] | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_model(cfg)
        self.g = {p: group(self.params, p) for p in PREFIXES}
        self.skel_encoder = skeleton.SkeletonEncoder()

    # -- per-clip features --------------------------------------------------
    def encode(self, videos: np.ndarray, poses: np.ndarray) -> Streams:
        v, p = nc.Tensor(videos), nc.Tensor(poses)
        return Streams(
            dy=visual.encode_dynamic(v, self.g["dyn"]),
            st=visual.encode_static(v, self.g["sta"]),
            sk=skeleton.encode_skeleton(p, self.g["skel"], self.skel_encoder),
        )

    def transition_logits(self, streams: Streams) -> nc.Tensor:
        return seg.transition_logits(streams.dy, self.g["seg"])

    def predict_transitions(self, streams: Streams) -> list[seg.TransitionPrediction]:
        with nc.no_grad():
            probs = nc.softmax(self.transition_logits(streams), axis=-1).data
        return [seg.decode_transitions(p) for p in probs]

    def stage_tokens(self, streams: Streams, transitions) -> StageTokens:
        T_s = self.cfg.tokens
        dy = seg.pool_stage_features(streams.dy, transitions, T_s)
        sk = seg.pool_stage_features(streams.sk, transitions, T_s)
        st = seg.pool_stage_features(streams.st, transitions, T_s)
        fused = fusion.fuse_all(dy, sk, self.g["fuse"], self.cfg.fusion_heads, self.cfg.fusion_variant)
        return StageTokens(fused, st)

    # -- pairwise ---------------------------------------------------------------
    def differences(self, q: StageTokens, e: StageTokens) -> tuple[nc.Tensor, nc.Tensor]:
        h = self.cfg.decoder_heads
        return (rg.decode_difference(q.fused, e.fused, self.g["dec_fu"], h),
                rg.decode_difference(q.static, e.static, self.g["dec_st"], h))

    def predict_pair(self, q: StageTokens, e: StageTokens, e_score, e_splash) -> tuple[nc.Tensor, nc.Tensor]:
        d_fu, d_st = self.differences(q, e)
        s = rg.regress_score(d_fu, d_st, self.g["score"], e_score, self.cfg.score_scale)
        a = rg.regress_splash(d_fu, d_st, self.g["splash"], e_splash, self.cfg.splash_scale)
        return s, a

    def contrastive(self, q: StageTokens, e: StageTokens) -> nc.Tensor:
        c = rg.ContrastiveConfig(self.cfg.tau)
        return (rg.stage_contrastive_loss(q.fused, e.fused, self.params["norm_fu.w"], c)
                + rg.stage_contrastive_loss(q.static, e.static, self.params["norm_st.w"], c))


@dataclass
class StepLoss:
    total: nc.Tensor
    terms: dict[str, float]


def pair_loss(model: Model, videos: np.ndarray, poses: np.ndarray, transitions: np.ndarray,
              scores: np.ndarray, splash: np.ndarray) -> StepLoss:
    """Training objective for B query/exemplar pairs.

    Inputs stack the B queries first and their B exemplars second (2B clips).
    Stage pooling uses the ground-truth transitions; the transition heads are
    trained by the cross-entropy term, averaged over all 2B clips.
    """
    n = len(videos)
    if n % 2:
        raise ContractError("pair batch must hold queries then exemplars")
    B = n // 2
    streams = model.encode(videos, poses)
    l_ce = seg.segmentation_loss_from_logits(model.transition_logits(streams), transitions)
    tok = model.stage_tokens(streams, [tuple(t) for t in transitions])
    q = StageTokens(tok.fused[:B], tok.static[:B])
    e = StageTokens(tok.fused[B:], tok.static[B:])
    l_cont = model.contrastive(q, e)
    s_hat, a_hat = model.predict_pair(q, e, scores[B:], splash[B:])
    total = rg.total_loss(s_hat, scores[:B], a_hat, splash[:B], l_ce, l_cont)
    terms = {
        "aqa": rg.mse(s_hat, scores[:B]).item(),
        "splash": rg.mse(a_hat, splash[:B]).item(),
        "ce": l_ce.item(),
        "cont": l_cont.item(),
    }
    return StepLoss(total, terms)
