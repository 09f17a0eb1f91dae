"""Training loop, voting inference and test-split evaluation."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import metrics, numcore as nc
from ..errors import ContractError
from .config import Config
from .dataset import Dataset
from .model import Model, StageTokens, pair_loss

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "total", "aqa", "splash", "ce", "cont")


class Adam:
    """Adaptive-moment update on a dict of leaf tensors; no weight decay."""

    def __init__(self, params: dict[str, nc.Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochLog:
    rows: list[dict[str, float]] = field(default_factory=list)

    def append(self, row: dict[str, float]) -> None:
        self.rows.append(row)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_FIELDS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def sample_exemplars(rng: np.random.Generator, queries: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Uniform exemplar per query from ``pool``, never the query itself."""
    if len(pool) < 2:
        raise ContractError("need at least two training samples to form pairs")
    out = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        e = q
        while e == q:
            e = pool[rng.integers(len(pool))]
        out[i] = e
    return out


def train(cfg: Config, ds: Dataset, model: Model | None = None, epochs: int | None = None,
          progress: bool = False) -> tuple[Model, EpochLog]:
    model = model if model is not None else Model(cfg)
    epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng([cfg.seed, 0x7A1])
    opt = Adam(model.params, cfg.lr)
    train_idx = ds.indices("train")
    history = EpochLog()
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        sums = dict.fromkeys(LOG_FIELDS[1:], 0.0)
        n_steps = 0
        order = rng.permutation(train_idx)
        for start in range(0, len(order), cfg.batch_size):
            q = order[start:start + cfg.batch_size]
            e = sample_exemplars(rng, q, train_idx)
            idx = np.concatenate([q, e])
            opt.zero_grad()
            loss = pair_loss(model, ds.video_batch(idx), ds.pose_batch(idx), ds.stage_transitions(idx, cfg.n_stages),
                             ds.scores[idx], ds.splash[idx])
            nc.backward(loss.total)
            opt.step()
            sums["total"] += loss.total.item()
            for k, v in loss.terms.items():
                sums[k] += v
            n_steps += 1
        row = {"epoch": epoch, **{k: v / n_steps for k, v in sums.items()}}
        history.append(row)
        msg = (f"epoch {epoch:3d}  total {row['total']:.3f}  aqa {row['aqa']:.3f}  splash {row['splash']:.3f}  "
               f"ce {row['ce']:.4f}  cont {row['cont']:.4f}  ({time.perf_counter() - t0:.1f}s)")
        log.info(msg)
        if progress:
            print(msg, flush=True)
    return model, history


# -- inference ----------------------------------------------------------------

@dataclass
class EncodedSet:
    """Stage tokens and predicted transitions for a set of clips."""
    index: np.ndarray
    tokens: StageTokens
    transitions: list[tuple[int, ...]]
    fallback: list[bool]

    def take(self, rows) -> StageTokens:
        rows = np.asarray(rows)
        return StageTokens(nc.Tensor(self.tokens.fused.data[rows]), nc.Tensor(self.tokens.static.data[rows]))

    def row_of(self, sample_index: int) -> int:
        return int(np.flatnonzero(self.index == sample_index)[0])


def encode_set(model: Model, ds: Dataset, idx, chunk: int = 32) -> EncodedSet:
    """Encode clips, predict their transitions and pool stage tokens on the prediction."""
    idx = np.asarray(idx)
    fused, static, trans, fb = [], [], [], []
    with nc.no_grad():
        for s in range(0, len(idx), chunk):
            part = idx[s:s + chunk]
            streams = model.encode(ds.video_batch(part), ds.pose_batch(part))
            preds = model.predict_transitions(streams)
            t = [p.transitions for p in preds]
            tok = model.stage_tokens(streams, t)
            fused.append(tok.fused.data)
            static.append(tok.static.data)
            trans += t
            fb += [p.fallback for p in preds]
    tokens = StageTokens(nc.Tensor(np.concatenate(fused)), nc.Tensor(np.concatenate(static)))
    return EncodedSet(idx, tokens, trans, fb)


def pairwise_predictions(model: Model, queries: EncodedSet, q_row: int, exemplars: EncodedSet, e_rows,
                         e_scores, e_splash) -> tuple[np.ndarray, np.ndarray]:
    """Per-exemplar (score, splash) predictions for one query."""
    e_rows = np.asarray(e_rows)
    if e_rows.size == 0:
        raise ContractError("exemplar set is empty")
    n = e_rows.size
    qt = queries.take(np.full(n, q_row))
    et = exemplars.take(e_rows)
    with nc.no_grad():
        s, a = model.predict_pair(qt, et, np.asarray(e_scores, dtype=np.float64), np.asarray(e_splash, dtype=np.float64))
    return s.data, a.data


def vote(per_exemplar: np.ndarray) -> float:
    return float(np.mean(per_exemplar))


def choose_exemplars(rng: np.random.Generator, pool: np.ndarray, n: int, exclude: int | None = None) -> np.ndarray:
    pool = pool[pool != exclude] if exclude is not None else pool
    if len(pool) == 0:
        raise ContractError("no exemplars available")
    return pool[rng.integers(0, len(pool), size=n)]


@dataclass
class EvalResult:
    srcc: object
    rl2: float
    aiou50: float
    aiou75: float
    splash_mse: float
    predictions: np.ndarray
    truths: np.ndarray
    transitions: list[tuple[int, ...]]

    def table(self) -> str:
        return metrics.format_table(self.srcc, self.rl2, self.aiou50, self.aiou75)


def evaluate(model: Model, ds: Dataset, split: str = "test", n_vote: int | None = None) -> EvalResult:
    cfg = model.cfg
    n_vote = cfg.n_vote if n_vote is None else n_vote
    q_idx = ds.indices(split)
    pool = ds.indices("train")
    rng = np.random.default_rng([cfg.seed, 0xE7A1])
    q_set = encode_set(model, ds, q_idx)
    e_set = encode_set(model, ds, pool)
    preds, splash_preds = [], []
    for row, qi in enumerate(q_idx):
        ex = choose_exemplars(rng, pool, n_vote, exclude=qi)
        s, a = pairwise_predictions(model, q_set, row, e_set, [e_set.row_of(e) for e in ex],
                                    ds.scores[ex], ds.splash[ex])
        preds.append(vote(s))
        splash_preds.append(vote(a))
    preds = np.array(preds)
    truths = ds.scores[q_idx]
    T = ds.n_frames
    gt = ds.stage_transitions(q_idx, cfg.n_stages)
    pb = [[0, *t, T] for t in q_set.transitions]
    gb = [[0, *map(int, t), T] for t in gt]
    lo, hi = float(ds.scores.min()), float(ds.scores.max())
    return EvalResult(
        srcc=metrics.srcc(truths, preds),
        rl2=metrics.relative_l2(truths, preds, lo, hi),
        aiou50=metrics.aiou(pb, gb, 0.5),
        aiou75=metrics.aiou(pb, gb, 0.75),
        splash_mse=metrics.mse(ds.splash[q_idx], splash_preds),
        predictions=preds,
        truths=truths,
        transitions=q_set.transitions,
    )


def write_outputs(out, model: Model, history: EpochLog) -> None:
    from .checkpoint import save_checkpoint

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint({k: p.data for k, p in model.params.items()}, out / "model.aqac")
    (out / "config.cfg").write_text(model.cfg.dumps(), encoding="utf-8")
    history.write_csv(out / "log.csv")
