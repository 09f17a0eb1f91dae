"""Train and evaluate on the synthetic diving set, writing checkpoint, log and a results table.

    python3 scripts/desk_experiment.py --seed 7 --count 500 --epochs 20 --out runs/desk
"""
import argparse
import json
import time
from pathlib import Path

from poseaqa import metrics
from poseaqa.pipeline.config import Config, load_config
from poseaqa.pipeline.dataset import from_samples
from poseaqa.pipeline.synthetic import generate_synthetic
from poseaqa.pipeline.train import evaluate, train, write_outputs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--config", help="key = value overrides")
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else Config()
    cfg = cfg.replace(epochs=args.epochs)
    t0 = time.perf_counter()
    ds = from_samples(generate_synthetic(args.seed, args.count), args.seed)
    model, history = train(cfg, ds, progress=True)
    res = evaluate(model, ds, "test")
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    write_outputs(out, model, history)
    loss = history.column("total")
    summary = {
        "seed": args.seed, "count": args.count, "epochs": args.epochs, "seconds": round(elapsed, 1),
        "srcc": None if res.srcc is metrics.UNDEFINED else res.srcc,
        "rl2_x100": 100 * res.rl2, "aiou50": res.aiou50, "aiou75": res.aiou75, "splash_mse": res.splash_mse,
        "loss_first": loss[0], "loss_last": loss[-1],
    }
    (out / "results.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(res.table())
    print(f"splash MSE {res.splash_mse:.3f}; loss {loss[0]:.1f} -> {loss[-1]:.2f}; {elapsed:.0f}s")


if __name__ == "__main__":
    main()
