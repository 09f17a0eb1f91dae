"""Command-line entry point.

Exit codes: 0 success, 2 contract error (bad arguments or inputs that
violate an operation's preconditions), 3 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .. import annotation as ann, metrics
from ..errors import ContractError, FormatError
from . import checkpoint
from .config import Config, load_config
from .dataset import from_samples, load_dataset, save_dataset
from .model import Model
from .synthetic import generate_synthetic

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 2, 3


def _load_model(ckpt) -> Model:
    ckpt = Path(ckpt)
    cfg_path = ckpt.with_name("config.cfg")
    cfg = load_config(cfg_path) if cfg_path.exists() else Config()
    model = Model(cfg)
    checkpoint.assign(model.params, checkpoint.load_checkpoint(ckpt))
    return model


def cmd_gen_data(a) -> int:
    ds = from_samples(generate_synthetic(a.seed, a.count), a.seed)
    save_dataset(ds, a.out)
    n_train = int((ds.split == "train").sum())
    print(f"wrote {len(ds)} samples ({n_train} train / {len(ds) - n_train} test) to {a.out}")
    return EXIT_OK


def cmd_train(a) -> int:
    from .train import train, write_outputs

    cfg = load_config(a.config) if a.config else Config()
    if a.epochs is not None:
        cfg = cfg.replace(epochs=a.epochs)
    ds = load_dataset(a.data)
    model, history = train(cfg, ds, progress=not a.quiet)
    write_outputs(a.out, model, history)
    print(f"saved checkpoint, config and log to {a.out}")
    return EXIT_OK


def cmd_eval(a) -> int:
    from .train import evaluate

    model = _load_model(a.ckpt)
    res = evaluate(model, load_dataset(a.data), split=a.split)
    print(res.table())
    print(f"splash MSE {res.splash_mse:.4f}")
    return EXIT_OK


def cmd_infer(a) -> int:
    from .train import choose_exemplars, encode_set, pairwise_predictions, vote

    model = _load_model(a.ckpt)
    ds = load_dataset(a.data)
    qi = ds.index_of(a.query)
    if a.exemplars.isdigit():
        rng = np.random.default_rng([model.cfg.seed, 0xE7A1, qi])
        ex = choose_exemplars(rng, ds.indices("train"), int(a.exemplars), exclude=qi)
    else:
        ex = np.array([ds.index_of(s) for s in a.exemplars.split(",") if s])
    if ex.size == 0:
        raise ContractError("exemplar set is empty")
    q_set = encode_set(model, ds, [qi])
    e_set = encode_set(model, ds, np.unique(ex))
    s, sp = pairwise_predictions(model, q_set, 0, e_set, [e_set.row_of(e) for e in ex], ds.scores[ex], ds.splash[ex])
    print(f"query {a.query}  transitions {' '.join(map(str, q_set.transitions[0]))}")
    print(f"score {vote(s):.4f}")
    print(f"splash {vote(sp):.4f}")
    return EXIT_OK


def cmd_segment(a) -> int:
    from .train import encode_set

    model = _load_model(a.ckpt)
    ds = load_dataset(a.data)
    idx = np.arange(len(ds)) if a.split == "all" else ds.indices(a.split)
    enc = encode_set(model, ds, idx)
    n_t = model.cfg.n_stages - 1
    fh = open(a.out, "w", newline="", encoding="utf-8") if a.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"t{k + 1}" for k in range(n_t)])
        for i, t in zip(idx, enc.transitions):
            w.writerow([ds.ids[i], *t])
    finally:
        if a.out:
            fh.close()
    return EXIT_OK


def _read_csv(path) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e


def _floats(rows, key, path) -> np.ndarray:
    try:
        return np.array([float(r[key]) for r in rows])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad or missing column {key!r}") from e


def read_boundaries(path) -> tuple[list[list[int]], list[list[int]]]:
    """CSV with ``frames``, ``pred_t1..`` and ``gt_t1..`` columns."""
    rows = _read_csv(path)
    if not rows:
        raise FormatError(f"{path}: no boundary rows")
    cols = list(rows[0].keys())
    pc = sorted((c for c in cols if c.startswith("pred_t")), key=lambda c: int(c[6:]))
    gc = sorted((c for c in cols if c.startswith("gt_t")), key=lambda c: int(c[4:]))
    if "frames" not in cols or len(pc) != len(gc):
        raise FormatError(f"{path}: expected frames, pred_t1.. and gt_t1.. columns")
    preds, gts = [], []
    try:
        for r in rows:
            T = int(r["frames"])
            preds.append([0, *(int(r[c]) for c in pc), T])
            gts.append([0, *(int(r[c]) for c in gc), T])
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from e
    return preds, gts


def cmd_metrics(a) -> int:
    rows = _read_csv(a.scores)
    if not rows:
        raise FormatError(f"{a.scores}: no score rows")
    y, p = _floats(rows, "truth", a.scores), _floats(rows, "prediction", a.scores)
    lo, hi = (float(y.min()), float(y.max())) if a.range is None else a.range
    a5 = a75 = None
    if a.boundaries:
        pb, gb = read_boundaries(a.boundaries)
        a5, a75 = metrics.aiou(pb, gb, 0.5), metrics.aiou(pb, gb, 0.75)
    print(metrics.format_table(metrics.srcc(y, p), metrics.relative_l2(y, p, lo, hi), a5, a75))
    return EXIT_OK


def _box(text: str) -> ann.BoundingBox:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ContractError(f"bad box {text!r}; expected x1,y1,x2,y2") from None
    if len(vals) != 4:
        raise ContractError(f"bad box {text!r}; expected x1,y1,x2,y2")
    return ann.BoundingBox(*vals)


def cmd_annotate(a) -> int:
    if a.what == "track":
        init = _box(a.init)
        table = ann.read_boxes_csv(a.boxes)
        frames = range(min(table), max(table) + 1) if table else range(0)
        results = ann.track_sequence(init, [table.get(f, []) for f in frames], a.floor)
        rows = []
        for f, r in zip(frames, results):
            if r.lost:
                rows.append([f, "lost", "", "", "", "", ""])
            else:
                b = r.box
                rows.append([f, r.index, repr(b.x1), repr(b.y1), repr(b.x2), repr(b.y2), repr(r.distance)])
        header = ["frame", "index", "x1", "y1", "x2", "y2", "distance"]
        if a.out:
            ann.write_rows(a.out, header, rows)
        else:
            w = csv.writer(sys.stdout, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    elif a.what == "interp":
        recs = sorted(ann.read_pose_csv(a.poses), key=lambda r: r.frame)
        if not recs:
            raise FormatError(f"{a.poses}: no pose records")
        by_frame = {r.frame: r for r in recs}
        first, last = recs[0].frame, recs[-1].frame
        poses = np.full((last - first + 1, ann.N_JOINTS, 2), np.nan)
        for r in recs:
            if r.visible.any():
                kp = r.keypoints.copy()
                kp[~r.visible] = np.nan
                poses[r.frame - first] = kp
        # joints missing in some frames are filled per joint from the nearest valid frames
        filled = np.empty_like(poses)
        for j in range(ann.N_JOINTS):
            filled[:, j:j + 1] = ann.fill_missing(poses[:, j:j + 1], a.printed_coefficients)
        out = []
        for k in range(len(filled)):
            src = by_frame.get(first + k)
            box = src.box if src is not None else None
            if box is None:
                lo, hi = filled[k].min(axis=0), filled[k].max(axis=0)
                box = ann.BoundingBox(lo[0] - 1, lo[1] - 1, hi[0] + 1, hi[1] + 1, 0.0)
            out.append(ann.PoseAnnotation(first + k, filled[k], np.ones(ann.N_JOINTS, bool), box))
        ann.write_pose_csv(a.out, out)
        print(f"wrote {len(out)} frames ({len(out) - len(recs)} reconstructed) to {a.out}")
    else:
        areas = ann.read_splash_csv(a.areas)
        print(f"{ann.integrate_splash(ann.SplashTrack(areas, a.dt)):.6g}")
    return EXIT_OK


def _range(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poseaqa", description="Pose-guided multi-stage action quality assessment")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="key = value config file (defaults if omitted)")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, help="override the config's epoch count")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="voting evaluation on a split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=["train", "test"])
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("infer", help="score one clip against exemplars")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--query", required=True, help="sample id")
    i.add_argument("--exemplars", default="10", help="comma-separated sample ids, or a count drawn from the train split")
    i.set_defaults(fn=cmd_infer)

    s = sub.add_parser("segment", help="predict stage transitions")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="all", choices=["all", "train", "test"])
    s.add_argument("--out", help="CSV path (stdout if omitted)")
    s.set_defaults(fn=cmd_segment)

    m = sub.add_parser("metrics", help="SRCC / R_L2 / AIoU from CSV files")
    m.add_argument("--scores", required=True, help="CSV with truth,prediction columns")
    m.add_argument("--boundaries", help="CSV with frames,pred_t1..,gt_t1.. columns")
    m.add_argument("--range", type=_range, help="score range lo,hi for R_L2 (default: truth min,max)")
    m.set_defaults(fn=cmd_metrics)

    a = sub.add_parser("annotate", help="annotation helpers")
    asub = a.add_subparsers(dest="what", required=True)
    at = asub.add_parser("track", help="nearest-box subject tracking")
    at.add_argument("--boxes", required=True, help="CSV frame,x1,y1,x2,y2,conf")
    at.add_argument("--init", required=True, help="starting box x1,y1,x2,y2")
    at.add_argument("--floor", type=float, default=ann.CONFIDENCE_FLOOR)
    at.add_argument("--out")
    ai = asub.add_parser("interp", help="fill missing frames / joints in a pose file")
    ai.add_argument("--poses", required=True)
    ai.add_argument("--out", required=True)
    ai.add_argument("--printed-coefficients", action="store_true",
                    help="swap the interpolation weights (compatibility with annotations made that way)")
    asp = asub.add_parser("splash", help="integrate a splash-area track")
    asp.add_argument("--areas", required=True, help="CSV frame,area")
    asp.add_argument("--dt", type=float, default=1.0)
    a.set_defaults(fn=cmd_annotate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except ContractError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
