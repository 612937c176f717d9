"""Ablation comparison: refiner input variants and two-stage vs single-stage.

Trains four arms at equal budget and seed on the toy corpus — the `offset`,
`attribute_only`, and `plain` refiner variants (two-stage each) plus a
single-stage run at the same total epoch count — then prints a recovery
comparison table and the directional outcomes. About eight minutes on one
core at the default budget.

    python scripts/run_ablation.py --out runs/ablation
"""

import argparse
import json
import os
import time

from sketchmod.data import generate_synthetic, prepare_sketch
from sketchmod.network import ModelConfig
from sketchmod.training import (
    TrainConfig,
    evaluate_recovery,
    train_single_stage,
    train_stage1,
    train_stage2,
)

TOY_MODEL = dict(
    d_model=32, n_heads=4, n_points=16, n_mixtures=3, image_size=16, k_max=8,
    encoder_hidden=64, predictor_hidden=64, offset_hidden=32,
    n_refiner_layers=2, n_mixer_layers=2, seed=0,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="artifact directory (optional)")
    ap.add_argument("--epochs", type=int, default=200, help="epochs per stage")
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-seed", type=int, default=123)
    ap.add_argument("--eval-trials", type=int, default=100)
    args = ap.parse_args()

    train_sketches = generate_synthetic(seed=0, n=64)
    held_sketches = generate_synthetic(seed=1, n=32)
    cfg0 = ModelConfig(**TOY_MODEL)
    prepared = [prepare_sketch(s, cfg0.n_points, cfg0.image_size) for s in train_sketches]
    held = [prepare_sketch(s, cfg0.n_points, cfg0.image_size) for s in held_sketches]

    arms = {}
    for variant in ("offset", "attribute_only", "plain"):
        out_dir = os.path.join(args.out, variant) if args.out else None
        cfg = ModelConfig(**{**TOY_MODEL, "variant": variant})
        t0 = time.perf_counter()
        model, _, _ = train_stage1(
            TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                        seed=args.seed, variant=variant),
            cfg,
            prepared,
            out_dir=out_dir,
        )
        model, _, _ = train_stage2(
            TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                        seed=args.seed, stage="stage2", variant=variant),
            model,
            prepared,
            out_dir=out_dir,
        )
        arms[variant] = evaluate_recovery(
            model, held, seed=args.eval_seed, n_trials=args.eval_trials
        )
        print(f"trained {variant} in {time.perf_counter() - t0:.0f}s", flush=True)

    out_dir = os.path.join(args.out, "single_stage") if args.out else None
    t0 = time.perf_counter()
    single, _, _ = train_single_stage(
        TrainConfig(epochs=2 * args.epochs, batch_size=args.batch_size,
                    seed=args.seed, stage="single_stage"),
        ModelConfig(**TOY_MODEL),
        prepared,
        out_dir=out_dir,
    )
    arms["single_stage"] = evaluate_recovery(
        single, held, seed=args.eval_seed, n_trials=args.eval_trials
    )
    print(f"trained single_stage in {time.perf_counter() - t0:.0f}s", flush=True)

    print(f"\n{'arm':16s} {'improved_fraction':>18s} {'mean_refined_error':>19s} "
          f"{'mean_corrupted_error':>21s}")
    for name, rec in arms.items():
        print(f"{name:16s} {rec['improved_fraction']:18.2f} "
              f"{rec['mean_refined_error']:19.3f} {rec['mean_corrupted_error']:21.3f}")

    off, attr, plain = arms["offset"], arms["attribute_only"], arms["plain"]
    single_rec = arms["single_stage"]
    print("\ndirectional outcomes (offset vs variants, two-stage vs single-stage):")
    for metric, better_low in (("improved_fraction", False), ("mean_refined_error", True)):
        cmp = (lambda a, b: a <= b) if better_low else (lambda a, b: a >= b)
        variant_ok = cmp(off[metric], attr[metric]) and cmp(off[metric], plain[metric])
        stage_ok = cmp(off[metric], single_rec[metric])
        print(f"  {metric}: offset>=variants {variant_ok}, two-stage>=single {stage_ok}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "comparison.json"), "w") as fh:
            json.dump(arms, fh, indent=2, sort_keys=True)
        print(f"\nwrote {os.path.join(args.out, 'comparison.json')}")


if __name__ == "__main__":
    main()
