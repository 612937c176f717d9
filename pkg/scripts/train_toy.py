"""Train the toy two-stage model end to end and report pose recovery.

Runs the frozen desk-scale profile (the same one tests/test_acceptance.py
pins): 64 procedural training sketches, 32 held-out sketches, 200 epochs per
stage. Finishes in about two minutes on one core and prints the stage loss
curves plus the held-out recovery metrics.

    python scripts/train_toy.py --out runs/toy
"""

import argparse
import json
import time

from sketchmod.data import generate_synthetic, prepare_sketch
from sketchmod.network import ModelConfig
from sketchmod.training import TrainConfig, evaluate_recovery, train_stage1, train_stage2

TOY_MODEL = dict(
    d_model=32, n_heads=4, n_points=16, n_mixtures=3, image_size=16, k_max=8,
    encoder_hidden=64, predictor_hidden=64, offset_hidden=32,
    n_refiner_layers=2, n_mixer_layers=2, seed=0,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/toy", help="artifact directory")
    ap.add_argument("--epochs", type=int, default=200, help="epochs per stage")
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0, help="training seed")
    ap.add_argument("--train-sketches", type=int, default=64)
    ap.add_argument("--held-out-sketches", type=int, default=32)
    ap.add_argument("--eval-seed", type=int, default=123)
    ap.add_argument("--eval-trials", type=int, default=100)
    args = ap.parse_args()

    cfg = ModelConfig(**TOY_MODEL)
    train_sketches = generate_synthetic(seed=0, n=args.train_sketches)
    held_sketches = generate_synthetic(seed=1, n=args.held_out_sketches)
    prepared = [prepare_sketch(s, cfg.n_points, cfg.image_size) for s in train_sketches]
    held = [prepare_sketch(s, cfg.n_points, cfg.image_size) for s in held_sketches]
    print(json.dumps({"model": TOY_MODEL, "epochs": args.epochs, "seed": args.seed}))

    t0 = time.perf_counter()
    model, report1, ckpt1 = train_stage1(
        TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed),
        cfg,
        prepared,
        out_dir=args.out,
    )
    curve1 = report1.loss_curve("total")
    print(f"stage1: {time.perf_counter() - t0:.0f}s "
          f"loss {curve1[0]:.2f} -> {curve1[-1]:.2f} (ratio {curve1[-1] / curve1[0]:.3f}) "
          f"checkpoint {ckpt1}")

    t1 = time.perf_counter()
    model, report2, ckpt2 = train_stage2(
        TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                    stage="stage2"),
        model,
        prepared,
        out_dir=args.out,
    )
    curve2 = report2.loss_curve("total")
    print(f"stage2: {time.perf_counter() - t1:.0f}s "
          f"loss {curve2[0]:.2f} -> {curve2[-1]:.2f} checkpoint {ckpt2}")

    for name, sketches in (("train", prepared), ("held-out", held)):
        metrics = evaluate_recovery(
            model, sketches, seed=args.eval_seed, n_trials=args.eval_trials
        )
        print(f"{name} recovery: {json.dumps(metrics)}")


if __name__ == "__main__":
    main()
