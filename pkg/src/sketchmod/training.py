"""Two-stage training orchestration, the single-stage ablation, and recovery
evaluation.

Stage I trains the reconstruction backbone (encoder, attribute predictor,
mixer, both generators) on uncorrupted sketches; the refinement modules never
enter the graph. Stage II freezes the backbone and trains only the offset
embedder and refiner on per-batch corrupted sources. The single-stage variant
optimizes everything jointly with the summed objective.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import (
    CheckpointMismatch,
    config_hash,
    load_checkpoint,
    params_hash,
    save_checkpoint,
)
from .data import PreparedSketch, corrupt_sample, make_batch, prepare_sketch
from .geometry import corrupt_attributes, StrokeAttributes
from .network import ModelConfig, SketchModel, stage1_loss, stage2_loss
from .optim import AdamW, cosine_lr

STAGES = ("stage1", "stage2", "single_stage")


class DataEmpty(ValueError):
    """Training or evaluation invoked with no usable sketches."""


class NonFiniteLoss(RuntimeError):
    """A loss went NaN/Inf; carries the last epoch-end parameter snapshot."""

    def __init__(self, message, last_good=None, checkpoint_path=None):
        super().__init__(message)
        self.last_good = last_good
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; model shape lives in ModelConfig.

    batch_size 16 and 200 epochs per stage are the desk-scale defaults;
    full_scale() returns the batch-80 profile.
    """

    batch_size: int = 16
    epochs: int = 200
    peak_lr: float = 0.001
    weight_decay: float = 0.01
    seed: int = 0
    stage: str = "stage1"
    variant: str = "offset"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.peak_lr <= 0:
            raise ValueError(f"peak_lr must be positive, got {self.peak_lr}")
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")

    @classmethod
    def full_scale(cls, **overrides):
        overrides.setdefault("batch_size", 80)
        return cls(**overrides)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainReport:
    """Per-epoch loss curves plus run metadata; losses are asserted finite and
    epoch indices monotone as records are appended."""

    stage: str
    seed: int
    config_hash: str
    train_config: dict
    model_config: dict
    epoch_records: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def append_epoch(self, record):
        if self.epoch_records and record["epoch"] <= self.epoch_records[-1]["epoch"]:
            raise ValueError(
                f"epoch {record['epoch']} not after {self.epoch_records[-1]['epoch']}"
            )
        for key, value in record.items():
            if isinstance(value, float) and not np.isfinite(value):
                raise NonFiniteLoss(f"non-finite {key} at epoch {record['epoch']}")
        self.epoch_records.append(record)

    def loss_curve(self, key="total"):
        return [r[key] for r in self.epoch_records]

    def to_records(self):
        """Line-delimited form: header, one record per epoch, summary."""
        header = {
            "kind": "header",
            "stage": self.stage,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "train_config": self.train_config,
            "model_config": self.model_config,
        }
        summary = {
            "kind": "summary",
            "epochs": len(self.epoch_records),
            "wall_clock": self.wall_clock,
            "metrics": self.metrics,
        }
        if self.epoch_records:
            summary["first_total"] = self.epoch_records[0]["total"]
            summary["final_total"] = self.epoch_records[-1]["total"]
        return [header] + [{"kind": "epoch", **r} for r in self.epoch_records] + [summary]

    def save(self, path):
        with open(path, "w") as fh:
            for record in self.to_records():
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        header = records[0]
        summary = records[-1]
        report = cls(
            stage=header["stage"],
            seed=header["seed"],
            config_hash=header["config_hash"],
            train_config=header["train_config"],
            model_config=header["model_config"],
            metrics=summary.get("metrics", {}),
            wall_clock=summary.get("wall_clock", 0.0),
        )
        for r in records[1:-1]:
            report.append_epoch({k: v for k, v in r.items() if k != "kind"})
        return report

    def summary_table(self):
        if not self.epoch_records:
            return f"{self.stage}: no epochs recorded"
        keys = [k for k in self.epoch_records[0] if k not in ("epoch", "seconds")]
        lines = [f"stage={self.stage} seed={self.seed} config={self.config_hash}"]
        lines.append("  ".join(["epoch"] + [f"{k:>12}" for k in keys]))
        shown = self.epoch_records
        if len(shown) > 12:
            shown = shown[:3] + shown[-9:]
        last_epoch = None
        for r in shown:
            if last_epoch is not None and r["epoch"] != last_epoch + 1:
                lines.append("  ...")
            last_epoch = r["epoch"]
            lines.append(
                "  ".join([f"{r['epoch']:>5}"] + [f"{r[k]:>12.5f}" for k in keys])
            )
        lines.append(f"wall_clock={self.wall_clock:.1f}s  metrics={self.metrics}")
        return "\n".join(lines)


# ----------------------------------------------------------------- internals


def _prepare_all(sketches, model_cfg):
    prepared = [
        s
        if isinstance(s, PreparedSketch)
        else prepare_sketch(s, model_cfg.n_points, model_cfg.image_size)
        for s in sketches
    ]
    if not prepared:
        raise DataEmpty("no sketches to train on")
    return prepared


def _forward_model_cfg(train_cfg, model_cfg):
    """TrainConfig.variant and the stage choice are forwarded into the model
    configuration so the checkpoint records what was actually trained."""
    d = model_cfg.to_dict()
    d["variant"] = train_cfg.variant
    d["single_stage"] = train_cfg.stage == "single_stage"
    return ModelConfig.from_dict(d)


def _batch_indices(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _mean_loss(losses):
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    return total * (1.0 / len(losses))


def _backbone_hash(model):
    return params_hash(
        {
            name: data
            for name, data in model.state_dict().items()
            if name.split(".", 1)[0] in model.BACKBONE
        }
    )


class _Loop:
    """Shared epoch/batch skeleton: cosine schedule, finite guard, report."""

    def __init__(self, model, named_params, train_cfg, n_batches_per_epoch, report):
        self.model = model
        self.opt = AdamW(
            named_params, lr=train_cfg.peak_lr, weight_decay=train_cfg.weight_decay
        )
        self.cfg = train_cfg
        self.total_steps = max(train_cfg.epochs * n_batches_per_epoch, 1)
        self.step = 0
        self.report = report
        report.metrics["optimizer_parameters"] = self.opt.parameter_names()
        self.last_good = model.state_dict()
        self.t0 = time.perf_counter()

    def optimize(self, batch_loss):
        value = batch_loss.item()
        if not np.isfinite(value):
            raise NonFiniteLoss(
                f"loss became {value} at step {self.step}", last_good=self.last_good
            )
        self.opt.zero_grad()
        batch_loss.backward()
        lr = cosine_lr(self.step, self.total_steps, self.cfg.peak_lr)
        self.opt.step(lr)
        self.step += 1
        return lr

    def end_epoch(self, epoch, sums, count, lr):
        record = {"epoch": epoch, "lr": lr}
        record.update({k: v / count for k, v in sums.items()})
        record["seconds"] = time.perf_counter() - self.t0
        self.report.append_epoch(record)
        self.last_good = self.model.state_dict()


def _finish(model, model_cfg, train_cfg, report, out_dir, stage):
    report.metrics["params_hash"] = params_hash(model.state_dict())
    checkpoint_path = None
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, f"{stage}.ckpt")
        state = model.state_dict()
        save_checkpoint(
            checkpoint_path,
            state,
            meta={
                "stage": stage,
                "model_config": model_cfg.to_dict(),
                "train_config": train_cfg.to_dict(),
                "config_hash": config_hash(model_cfg.to_dict()),
                "params_hash": params_hash(state),
            },
        )
        report.save(os.path.join(out_dir, f"{stage}_report.ndjson"))
        with open(os.path.join(out_dir, f"{stage}_model_card.txt"), "w") as fh:
            fh.write(model_card(model, model_cfg, train_cfg, stage))
    return checkpoint_path


def model_card(model, model_cfg, train_cfg, stage):
    lines = [
        "sketchmod model card",
        f"stage: {stage}",
        f"config_hash: {config_hash(model_cfg.to_dict())}",
        f"params_hash: {params_hash(model.state_dict())}",
        f"n_parameters: {model.n_parameters()}",
        "model_config:",
        json.dumps(model_cfg.to_dict(), indent=2, sort_keys=True),
        "train_config:",
        json.dumps(train_cfg.to_dict(), indent=2, sort_keys=True),
    ]
    return "\n".join(lines) + "\n"


def save_model(path, model, meta=None):
    state = model.state_dict()
    full_meta = {
        "model_config": model.cfg.to_dict(),
        "config_hash": config_hash(model.cfg.to_dict()),
        "params_hash": params_hash(state),
    }
    full_meta.update(meta or {})
    save_checkpoint(path, state, meta=full_meta)


def load_model(path):
    """Rebuild a SketchModel from a checkpoint, verifying both hashes."""
    params, meta = load_checkpoint(path)
    if "model_config" not in meta:
        raise CheckpointMismatch(f"{path}: checkpoint has no model_config in meta")
    cfg = ModelConfig.from_dict(meta["model_config"])
    if meta.get("config_hash") != config_hash(cfg.to_dict()):
        raise CheckpointMismatch(f"{path}: config hash does not match stored config")
    if meta.get("params_hash") != params_hash(params):
        raise CheckpointMismatch(f"{path}: parameter payload fails its content hash")
    model = SketchModel(cfg)
    model.load_state_dict(params)
    return model, meta


# -------------------------------------------------------------------- stages


def train_stage1(train_cfg, model_cfg, sketches, out_dir=None):
    """Reconstruction stage: backbone parameters only, sources uncorrupted."""
    model_cfg = _forward_model_cfg(train_cfg, model_cfg)
    model = SketchModel(model_cfg)
    return _run_stage1(train_cfg, model_cfg, model, sketches, out_dir, "stage1")


def _run_stage1(train_cfg, model_cfg, model, sketches, out_dir, stage):
    prepared = _prepare_all(sketches, model_cfg)
    report = TrainReport(
        stage=stage,
        seed=train_cfg.seed,
        config_hash=config_hash(model_cfg.to_dict()),
        train_config=train_cfg.to_dict(),
        model_config=model_cfg.to_dict(),
    )
    order_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 11]))
    n_batches = (len(prepared) + train_cfg.batch_size - 1) // train_cfg.batch_size
    loop = _Loop(model, model.stage1_parameters(), train_cfg, n_batches, report)
    for epoch in range(train_cfg.epochs):
        sums = {"seq": 0.0, "image": 0.0, "attrs": 0.0, "total": 0.0}
        count = 0
        lr = 0.0
        for idx in _batch_indices(len(prepared), train_cfg.batch_size, order_rng):
            losses = []
            for i in idx:
                prep = prepared[i]
                out = model.reconstruct_forward(prep.raw_rows, prep.norm_rows)
                loss, parts = stage1_loss(
                    out,
                    prep.gt_deltas,
                    prep.gt_pen,
                    prep.gt_raster,
                    prep.gt_attrs,
                    model_cfg.n_mixtures,
                )
                losses.append(loss)
                for k in sums:
                    sums[k] += parts[k]
                count += 1
            lr = loop.optimize(_mean_loss(losses))
        loop.end_epoch(epoch, sums, count, lr)
    report.wall_clock = time.perf_counter() - loop.t0
    checkpoint_path = _finish(model, model_cfg, train_cfg, report, out_dir, stage)
    return model, report, checkpoint_path


def train_stage2(train_cfg, stage1_checkpoint, sketches, out_dir=None, model_cfg=None):
    """Refinement stage: backbone frozen bitwise, only offset embedder and
    refiner parameters enter the optimizer; each batch re-corrupts sources."""
    if isinstance(stage1_checkpoint, SketchModel):
        model = stage1_checkpoint
        loaded_cfg = model.cfg
    else:
        model, meta = load_model(stage1_checkpoint)
        loaded_cfg = model.cfg
    if model_cfg is not None and config_hash(model_cfg.to_dict()) != config_hash(
        loaded_cfg.to_dict()
    ):
        raise CheckpointMismatch(
            "stage1 checkpoint was trained with a different model config "
            f"({config_hash(loaded_cfg.to_dict())} != {config_hash(model_cfg.to_dict())})"
        )
    if train_cfg.variant != loaded_cfg.variant:
        raise CheckpointMismatch(
            f"checkpoint variant {loaded_cfg.variant!r} != requested {train_cfg.variant!r}"
        )
    model_cfg = loaded_cfg
    prepared = _prepare_all(sketches, model_cfg)
    report = TrainReport(
        stage="stage2",
        seed=train_cfg.seed,
        config_hash=config_hash(model_cfg.to_dict()),
        train_config=train_cfg.to_dict(),
        model_config=model_cfg.to_dict(),
    )
    for name in model.BACKBONE:
        getattr(model, name).set_trainable(False)
    frozen_before = _backbone_hash(model)
    order_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 11]))
    corrupt_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 13]))
    n_batches = (len(prepared) + train_cfg.batch_size - 1) // train_cfg.batch_size
    loop = _Loop(model, model.stage2_parameters(), train_cfg, n_batches, report)
    for epoch in range(train_cfg.epochs):
        sums = {"embedding": 0.0, "attrs": 0.0, "total": 0.0}
        count = 0
        lr = 0.0
        for idx in _batch_indices(len(prepared), train_cfg.batch_size, order_rng):
            batch = make_batch([prepared[i] for i in idx], model_cfg, corrupt_rng)
            losses = []
            for sample in batch.samples:
                sigma = sample.source_index
                out = model.refine_forward(sample.raw_rows, sample.norm_rows, sigma)
                # GT source embedding recomputed per batch by the frozen
                # encoder (pure function, so caching would be equivalent)
                e_gt = model.encode_rows(sample.prep.raw_rows[sigma : sigma + 1])
                loss, parts = stage2_loss(
                    out["e_refined"],
                    out["attrs_refined"],
                    e_gt,
                    sample.prep.gt_attrs[sigma],
                )
                losses.append(loss)
                for k in sums:
                    sums[k] += parts[k]
                count += 1
            lr = loop.optimize(_mean_loss(losses))
        loop.end_epoch(epoch, sums, count, lr)
    report.wall_clock = time.perf_counter() - loop.t0
    frozen_after = _backbone_hash(model)
    report.metrics["frozen_hash_before"] = frozen_before
    report.metrics["frozen_hash_after"] = frozen_after
    if frozen_after != frozen_before:
        raise RuntimeError("frozen backbone parameters changed during stage2")
    checkpoint_path = _finish(model, model_cfg, train_cfg, report, out_dir, "stage2")
    return model, report, checkpoint_path


def train_single_stage(train_cfg, model_cfg, sketches, out_dir=None):
    """Joint ablation: every parameter optimized against the summed objective
    (reconstruction terms plus refinement terms) on the same corrupted batch."""
    model_cfg = _forward_model_cfg(train_cfg, model_cfg)
    model = SketchModel(model_cfg)
    prepared = _prepare_all(sketches, model_cfg)
    report = TrainReport(
        stage="single_stage",
        seed=train_cfg.seed,
        config_hash=config_hash(model_cfg.to_dict()),
        train_config=train_cfg.to_dict(),
        model_config=model_cfg.to_dict(),
    )
    order_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 11]))
    corrupt_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 13]))
    n_batches = (len(prepared) + train_cfg.batch_size - 1) // train_cfg.batch_size
    loop = _Loop(model, list(model.named_parameters()), train_cfg, n_batches, report)
    for epoch in range(train_cfg.epochs):
        sums = {
            "seq": 0.0,
            "image": 0.0,
            "recon_attrs": 0.0,
            "embedding": 0.0,
            "refined_attrs": 0.0,
            "total": 0.0,
        }
        count = 0
        lr = 0.0
        for idx in _batch_indices(len(prepared), train_cfg.batch_size, order_rng):
            batch = make_batch([prepared[i] for i in idx], model_cfg, corrupt_rng)
            losses = []
            for sample in batch.samples:
                loss, parts = single_stage_sample_loss(model, sample)
                losses.append(loss)
                for k in sums:
                    sums[k] += parts[k]
                count += 1
            lr = loop.optimize(_mean_loss(losses))
        loop.end_epoch(epoch, sums, count, lr)
    report.wall_clock = time.perf_counter() - loop.t0
    checkpoint_path = _finish(
        model, model_cfg, train_cfg, report, out_dir, "single_stage"
    )
    return model, report, checkpoint_path


def single_stage_sample_loss(model, sample):
    """Joint loss for one corrupted sample: stage1_loss on the edit outputs
    plus stage2_loss on the refinement outputs, summed.

    The attribute-regression target for the corrupted source row is the pose
    actually applied to it (the predictor reports the pose of the stroke it
    sees); reconstruction targets are the uncorrupted sketch.
    """
    from .autodiff import no_grad

    prep = sample.prep
    sigma = sample.source_index
    out = model.edit_forward(sample.raw_rows, sample.norm_rows, sigma)
    attr_targets = prep.gt_attrs.copy()
    attr_targets[sigma] = sample.corrupted_attrs
    l1, p1 = stage1_loss(
        out,
        prep.gt_deltas,
        prep.gt_pen,
        prep.gt_raster,
        attr_targets,
        model.cfg.n_mixtures,
    )
    with no_grad():
        e_gt = model.encode_rows(prep.raw_rows[sigma : sigma + 1])
    l2, p2 = stage2_loss(
        out["e_refined"], out["attrs_refined"], e_gt, prep.gt_attrs[sigma]
    )
    total = l1 + l2
    parts = {
        "seq": p1["seq"],
        "image": p1["image"],
        "recon_attrs": p1["attrs"],
        "embedding": p2["embedding"],
        "refined_attrs": p2["attrs"],
        "total": p1["total"] + p2["total"],
    }
    return total, parts


def train(train_cfg, model_cfg, sketches, out_dir=None, stage1_checkpoint=None):
    """Dispatch on train_cfg.stage; stage2 requires a stage1 checkpoint."""
    if train_cfg.stage == "stage1":
        return train_stage1(train_cfg, model_cfg, sketches, out_dir)
    if train_cfg.stage == "stage2":
        if stage1_checkpoint is None:
            raise ValueError("stage2 training requires a stage1 checkpoint")
        return train_stage2(
            train_cfg, stage1_checkpoint, sketches, out_dir, model_cfg=model_cfg
        )
    return train_single_stage(train_cfg, model_cfg, sketches, out_dir)


# ---------------------------------------------------------------- evaluation


def null_refiner(seed=0):
    """Chance-level rig: 'refines' by drawing a fresh corruption of the GT
    pose, so its error is an independent draw from the corrupted-input error
    distribution and the improvement fraction converges to 1/2."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1CE]))

    def refine(model, sample):
        sigma = sample.source_index
        gt = StrokeAttributes.from_vector(sample.prep.gt_attrs[sigma])
        e_gt = model.encode_rows(sample.prep.raw_rows[sigma : sigma + 1]).data[0]
        return e_gt, corrupt_attributes(gt, rng).as_vector()

    return refine


def perfect_refiner(model, sample):
    """Upper-bound rig: returns the ground-truth embedding and pose."""
    sigma = sample.source_index
    e_gt = model.encode_rows(sample.prep.raw_rows[sigma : sigma + 1]).data[0]
    return e_gt, sample.prep.gt_attrs[sigma].copy()


def evaluate_recovery(model, sketches, seed=0, n_trials=None, refine_fn=None):
    """Corrupt → refine → measure, deterministically per (seed, trial index).

    Returns per-component mean absolute pose errors, embedding distance, the
    fraction of trials where the refined pose is strictly closer to GT than
    the corrupted input, and the refined/corrupted error medians.
    """
    if isinstance(model, str):
        model, _ = load_model(model)
    cfg = model.cfg
    prepared = [
        s if isinstance(s, PreparedSketch) else prepare_sketch(s, cfg.n_points, cfg.image_size)
        for s in sketches
    ]
    prepared = [p for p in prepared if p.n_strokes >= 2]
    if not prepared:
        raise DataEmpty("no sketches with at least two strokes to evaluate")
    if n_trials is None:
        n_trials = len(prepared)
    comp_err = np.zeros(5)
    emb_dist = 0.0
    refined_errs = np.zeros(n_trials)
    corrupted_errs = np.zeros(n_trials)
    improved = 0
    for t in range(n_trials):
        prep = prepared[t % len(prepared)]
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        sample = corrupt_sample(prep, rng, cfg.n_points)
        sigma = sample.source_index
        p_gt = prep.gt_attrs[sigma]
        if refine_fn is not None:
            e_hat, p_prime = refine_fn(model, sample)
            e_hat = np.asarray(e_hat, dtype=np.float64).reshape(-1)
            p_prime = np.asarray(p_prime, dtype=np.float64).reshape(-1)
        else:
            out = model.refine_forward(sample.raw_rows, sample.norm_rows, sigma)
            e_hat = out["e_refined"].data[0]
            p_prime = out["attrs_refined"].data[0]
        e_gt = model.encode_rows(prep.raw_rows[sigma : sigma + 1]).data[0]
        comp_err += np.abs(p_prime - p_gt)
        emb_dist += float(np.linalg.norm(e_hat - e_gt))
        refined_errs[t] = np.linalg.norm(p_prime - p_gt)
        corrupted_errs[t] = np.linalg.norm(sample.corrupted_attrs - p_gt)
        if refined_errs[t] < corrupted_errs[t]:
            improved += 1
    return {
        "n_trials": n_trials,
        "component_error_mean": (comp_err / n_trials).tolist(),
        "embedding_distance_mean": emb_dist / n_trials,
        "improved_fraction": improved / n_trials,
        "median_refined_error": float(np.median(refined_errs)),
        "median_corrupted_error": float(np.median(corrupted_errs)),
        "mean_refined_error": float(refined_errs.mean()),
        "mean_corrupted_error": float(corrupted_errs.mean()),
    }
