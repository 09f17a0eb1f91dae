"""Stage-count and fusion-variant comparison on one synthetic set.

    python3 scripts/ablations.py --count 200 --epochs 15

Prints one row per variant, sorted by test SRCC. Orderings at this scale are
noisy; treat them as a smoke signal, not a result.
"""
import argparse
import time

from poseaqa import metrics
from poseaqa.pipeline.config import Config
from poseaqa.pipeline.dataset import from_samples
from poseaqa.pipeline.synthetic import generate_synthetic
from poseaqa.pipeline.train import evaluate, train

VARIANTS = {
    "K=1": dict(n_stages=1),
    "K=2": dict(n_stages=2),
    "K=3 weighted": dict(n_stages=3, fusion_variant="weighted"),
    "K=3 add": dict(n_stages=3, fusion_variant="add"),
    "K=3 dot": dict(n_stages=3, fusion_variant="dot"),
    "K=3 visual only": dict(n_stages=3, fusion_variant="visual"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--only", nargs="*", choices=sorted(VARIANTS), help="subset of variants")
    args = ap.parse_args()

    ds = from_samples(generate_synthetic(args.seed, args.count), args.seed)
    rows = []
    for name in args.only or VARIANTS:
        t0 = time.perf_counter()
        model, history = train(Config(seed=args.seed, **VARIANTS[name]), ds, epochs=args.epochs)
        res = evaluate(model, ds, "test")
        srcc = float("nan") if res.srcc is metrics.UNDEFINED else res.srcc
        rows.append((name, srcc, 100 * res.rl2, res.aiou50, res.aiou75, history.column("total")[-1],
                     time.perf_counter() - t0))
        print(f"done {name} ({rows[-1][-1]:.0f}s)", flush=True)

    print(f"\n{'variant':<16}{'SRCC':>8}{'R_L2x100':>10}{'AIoU.5':>8}{'AIoU.75':>8}{'loss':>9}")
    for name, s, r, a5, a75, loss, _ in sorted(rows, key=lambda r: -r[1] if r[1] == r[1] else 2):
        print(f"{name:<16}{s:8.4f}{r:10.3f}{a5:8.2f}{a75:8.2f}{loss:9.2f}")


if __name__ == "__main__":
    main()
