"""Command-line entry points: train, eval, edit, data synth, serve.

Exit codes: 0 success, 1 usage error (argparse failures, unknown flags),
2 runtime error (missing files, bad checkpoints, degenerate data). Every run
prints its resolved configuration and seed as one JSON line before acting.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser():
    parser = _Parser(prog="sketchmod", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training stage")
    train.add_argument("--stage", choices=["1", "2", "single"], default="1")
    train.add_argument("--config", help="JSON file with train/model sections")
    train.add_argument("--data", help="dataset file (json cache, ndjson, npz, npy)")
    train.add_argument("--synth", type=int, help="use N synthetic sketches instead")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--peak-lr", type=float)
    train.add_argument("--variant", choices=["offset", "attribute_only", "plain"])
    train.add_argument("--stage1-checkpoint", help="required for --stage 2")
    train.add_argument("--out", help="directory for checkpoint/report/model card")

    ev = sub.add_parser("eval", help="evaluate attribute recovery")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data")
    ev.add_argument("--synth", type=int)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--trials", type=int)

    edit = sub.add_parser("edit", help="apply one edit to a sketch file")
    edit.add_argument("--mode", required=True,
                      choices=["expand", "replace", "manipulate", "reconstruct"])
    edit.add_argument("--in", dest="target", required=True, help="sketch JSON file")
    edit.add_argument("--source", help="stroke JSON file (expand/replace)")
    edit.add_argument("--index", type=int, help="stroke index (replace)")
    edit.add_argument("--overrides", help="JSON {index: {attr: value}} (manipulate)")
    edit.add_argument("--checkpoint", help="trained model (optional for geometry-only)")
    edit.add_argument("--geometry-only", action="store_true")
    edit.add_argument("--temperature", type=float, default=0.0)
    edit.add_argument("--seed", type=int, default=0)
    edit.add_argument("--out", required=True, help=".svg, .json, .png or .pgm output")

    data = sub.add_parser("data", help="dataset utilities")
    data_sub = data.add_subparsers(dest="data_command", required=True)
    synth = data_sub.add_parser("synth", help="generate synthetic sketches")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--n", type=int, default=64)
    synth.add_argument("--out", required=True, help="dataset JSON file")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--checkpoint", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8423)
    serve.add_argument("--cors-origin", action="append", default=None)
    return parser


def _print_resolved(command, seed, **extra):
    record = {"command": command, "seed": seed}
    record.update(extra)
    print(json.dumps(record, sort_keys=True))


def _load_sketches(args):
    from .data import generate_synthetic, load_dataset, load_quickdraw

    if args.synth is not None:
        return generate_synthetic(seed=args.seed, n=args.synth)
    if args.data is None:
        raise UsageError("provide --data FILE or --synth N")
    if args.data.endswith(".json"):
        return load_dataset(args.data)
    return load_quickdraw(args.data)


def _cmd_train(args):
    from .network import ModelConfig
    from .training import TrainConfig, train

    stage = {"1": "stage1", "2": "stage2", "single": "single_stage"}[args.stage]
    if stage == "stage2" and not args.stage1_checkpoint:
        raise UsageError("--stage 2 requires --stage1-checkpoint")
    train_kw, model_kw = {}, {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        train_kw.update(file_cfg.get("train", {}))
        model_kw.update(file_cfg.get("model", {}))
    train_kw["stage"] = stage
    train_kw["seed"] = args.seed
    for key, value in [
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("peak_lr", args.peak_lr),
        ("variant", args.variant),
    ]:
        if value is not None:
            train_kw[key] = value
    train_cfg = TrainConfig(**train_kw)
    model_cfg = ModelConfig(**model_kw)
    _print_resolved(
        "train", train_cfg.seed,
        train_config=train_cfg.to_dict(), model_config=model_cfg.to_dict(),
    )
    sketches = _load_sketches(args)
    _, report, checkpoint_path = train(
        train_cfg, model_cfg, sketches,
        out_dir=args.out, stage1_checkpoint=args.stage1_checkpoint,
    )
    print(report.summary_table())
    if checkpoint_path:
        print(f"checkpoint: {checkpoint_path}")
    return 0


def _cmd_eval(args):
    from .training import evaluate_recovery, load_model

    model, meta = load_model(args.checkpoint)
    _print_resolved(
        "eval", args.seed, checkpoint=args.checkpoint,
        model_config=meta["model_config"],
    )
    sketches = _load_sketches(args)
    metrics = evaluate_recovery(model, sketches, seed=args.seed, n_trials=args.trials)
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _cmd_edit(args):
    from .data import save_raster, sketch_from_dict, sketch_to_dict
    from .editkit import EditRequest, apply_edit
    from .geometry import Stroke

    with open(args.target) as fh:
        target = sketch_from_dict(json.load(fh))
    source = None
    if args.source:
        with open(args.source) as fh:
            raw = json.load(fh)
        source = Stroke(
            np.asarray(raw["points"], dtype=np.float64),
            np.asarray(raw["pen"], dtype=np.int64),
        )
    overrides = {}
    if args.overrides:
        overrides = {int(k): v for k, v in json.loads(args.overrides).items()}
    model = None
    if args.checkpoint:
        from .training import load_model

        model, _ = load_model(args.checkpoint)
    _print_resolved(
        "edit", args.seed, mode=args.mode, geometry_only=args.geometry_only,
        checkpoint=args.checkpoint, temperature=args.temperature,
    )
    request = EditRequest(
        mode=args.mode,
        target=target,
        source=source,
        replace_index=args.index,
        attribute_overrides=overrides,
        decode_temperature=args.temperature or None,
        seed=args.seed,
        geometry_only=args.geometry_only,
    )
    result = apply_edit(model, request)
    if args.out.endswith(".svg"):
        with open(args.out, "w") as fh:
            fh.write(result.svg)
    elif args.out.endswith(".json"):
        with open(args.out, "w") as fh:
            json.dump(sketch_to_dict(result.edited), fh)
    elif args.out.endswith((".png", ".pgm")):
        save_raster(args.out, result.raster)
    else:
        raise UsageError(f"unsupported output extension: {args.out}")
    print(f"wrote {args.out}")
    return 0


def _cmd_data(args):
    from .data import generate_synthetic, save_dataset

    _print_resolved("data synth", args.seed, n=args.n, out=args.out)
    sketches = generate_synthetic(seed=args.seed, n=args.n)
    save_dataset(args.out, sketches)
    print(f"wrote {len(sketches)} sketches to {args.out}")
    return 0


def _cmd_serve(args):
    from .service import serve

    _print_resolved(
        "serve", 0, checkpoint=args.checkpoint, host=args.host, port=args.port
    )
    serve(
        args.checkpoint,
        host=args.host,
        port=args.port,
        cors_origins=args.cors_origin or ("*",),
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "edit": _cmd_edit,
        "data": _cmd_data,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except UsageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except Exception as err:  # runtime failures map to exit 2 by contract
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
