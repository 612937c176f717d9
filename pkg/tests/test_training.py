"""Training orchestration: stage separation, freezing, determinism, recovery
evaluation, and failure modes."""

import numpy as np
import pytest

from sketchmod.checkpoint import CheckpointMismatch, load_checkpoint, save_checkpoint
from sketchmod.data import generate_synthetic, make_batch, prepare_sketch
from sketchmod.geometry import PEN_DOWN, PEN_END, Sketch, Stroke
from sketchmod.network import ModelConfig, SketchModel, stage1_loss, stage2_loss
from sketchmod.training import (
    DataEmpty,
    NonFiniteLoss,
    TrainConfig,
    TrainReport,
    evaluate_recovery,
    load_model,
    null_refiner,
    perfect_refiner,
    single_stage_sample_loss,
    train,
    train_single_stage,
    train_stage1,
    train_stage2,
)

TINY = dict(
    d_model=8,
    n_heads=2,
    n_points=8,
    n_mixtures=2,
    image_size=16,
    k_max=8,
    encoder_hidden=16,
    predictor_hidden=12,
    offset_hidden=10,
    n_refiner_layers=2,
    n_mixer_layers=2,
    seed=3,
)


def tiny_model_cfg(**kw):
    return ModelConfig(**{**TINY, **kw})


def tiny_train_cfg(**kw):
    base = dict(batch_size=4, epochs=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def sketches8():
    return generate_synthetic(seed=41, n=8)


@pytest.fixture(scope="module")
def prepared8(sketches8):
    cfg = tiny_model_cfg()
    return [prepare_sketch(s, cfg.n_points, cfg.image_size) for s in sketches8]


# ------------------------------------------------------------------- configs


def test_train_config_defaults_and_full_scale():
    cfg = TrainConfig()
    assert cfg.batch_size == 16
    assert cfg.epochs == 200
    assert cfg.peak_lr == 0.001
    assert TrainConfig.full_scale().batch_size == 80
    assert TrainConfig.full_scale(epochs=3).epochs == 3


@pytest.mark.parametrize(
    "kw",
    [
        dict(batch_size=0),
        dict(epochs=0),
        dict(peak_lr=0.0),
        dict(peak_lr=-1.0),
        dict(stage="stage3"),
    ],
)
def test_train_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_train_config_round_trip():
    cfg = TrainConfig(batch_size=7, epochs=11, seed=9, stage="stage2", variant="plain")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_report_rejects_non_monotone_epochs():
    report = TrainReport("stage1", 0, "x", {}, {})
    report.append_epoch({"epoch": 0, "total": 1.0})
    report.append_epoch({"epoch": 1, "total": 0.9})
    with pytest.raises(ValueError):
        report.append_epoch({"epoch": 1, "total": 0.8})


def test_report_rejects_non_finite_losses():
    report = TrainReport("stage1", 0, "x", {}, {})
    with pytest.raises(NonFiniteLoss):
        report.append_epoch({"epoch": 0, "total": float("nan")})
    with pytest.raises(NonFiniteLoss):
        report.append_epoch({"epoch": 0, "total": float("inf")})


# ------------------------------------------------------------------- stage I


def test_stage1_never_touches_refinement_parameters(sketches8):
    model_cfg = tiny_model_cfg()
    model, report, _ = train_stage1(tiny_train_cfg(), model_cfg, sketches8[:4])
    fresh = SketchModel(model.cfg)
    trained = model.state_dict()
    init = fresh.state_dict()
    for name in trained:
        if name.split(".", 1)[0] in SketchModel.REFINEMENT:
            assert np.array_equal(trained[name], init[name]), name
        else:
            assert not np.array_equal(trained[name], init[name]), name
    assert all(
        n.split(".", 1)[0] in SketchModel.BACKBONE
        for n in report.metrics["optimizer_parameters"]
    )


def test_stage1_refiner_gradients_absent_from_graph(prepared8):
    model = SketchModel(tiny_model_cfg())
    prep = prepared8[0]
    out = model.reconstruct_forward(prep.raw_rows, prep.norm_rows)
    loss, _ = stage1_loss(
        out, prep.gt_deltas, prep.gt_pen, prep.gt_raster, prep.gt_attrs, 2
    )
    model.zero_grad()
    loss.backward()
    for name, t in model.named_parameters():
        if name.split(".", 1)[0] in SketchModel.REFINEMENT:
            assert t.grad is None, name
        else:
            assert t.grad is not None, name


def test_stage1_loss_decreases(prepared8):
    model, report, _ = train_stage1(
        tiny_train_cfg(epochs=20, batch_size=8, peak_lr=0.003),
        tiny_model_cfg(),
        prepared8,
    )
    curve = report.loss_curve("total")
    assert curve[-1] < 0.75 * curve[0]
    assert all(np.isfinite(curve))


def test_stage1_artifacts_round_trip(tmp_path, sketches8):
    out = tmp_path / "run"
    model, report, ckpt = train_stage1(tiny_train_cfg(), tiny_model_cfg(), sketches8[:4], out_dir=str(out))
    assert ckpt is not None
    loaded, meta = load_model(ckpt)
    assert meta["stage"] == "stage1"
    for name, data in model.state_dict().items():
        assert np.array_equal(data, loaded.state_dict()[name])
    rep = TrainReport.load(str(out / "stage1_report.ndjson"))
    assert rep.loss_curve("total") == report.loss_curve("total")
    assert rep.config_hash == report.config_hash
    card = (out / "stage1_model_card.txt").read_text()
    assert report.config_hash in card
    assert report.metrics["params_hash"] in card
    assert "stage=" in report.summary_table()


def test_stage1_empty_data_raises():
    with pytest.raises(DataEmpty):
        train_stage1(tiny_train_cfg(), tiny_model_cfg(), [])


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_non_finite_loss_aborts_with_last_good_snapshot(sketches8):
    cfg = tiny_train_cfg(epochs=3, batch_size=2, peak_lr=1e8)
    with pytest.raises(NonFiniteLoss) as err:
        train_stage1(cfg, tiny_model_cfg(), sketches8[:4])
    snapshot = err.value.last_good
    assert snapshot is not None
    for data in snapshot.values():
        assert np.all(np.isfinite(data))


def test_reproducible_loss_curves(sketches8):
    runs = [
        train_stage1(
            tiny_train_cfg(epochs=3, batch_size=2), tiny_model_cfg(), sketches8[:4]
        )[1]
        for _ in range(2)
    ]
    for key in ("total", "seq", "image", "attrs"):
        assert runs[0].loss_curve(key) == runs[1].loss_curve(key)
    other = train_stage1(
        tiny_train_cfg(epochs=3, batch_size=2, seed=5), tiny_model_cfg(), sketches8[:4]
    )[1]
    assert other.loss_curve("total") != runs[0].loss_curve("total")


# ------------------------------------------------------------------ stage II


@pytest.fixture(scope="module")
def stage1_run(tmp_path_factory, sketches8):
    out = tmp_path_factory.mktemp("stage1")
    model, report, ckpt = train_stage1(
        tiny_train_cfg(epochs=2), tiny_model_cfg(), sketches8, out_dir=str(out)
    )
    return model, report, ckpt


def test_stage2_freezes_backbone_bitwise(stage1_run, sketches8):
    _, _, ckpt = stage1_run
    before, _ = load_checkpoint(ckpt)
    model, report, _ = train_stage2(
        tiny_train_cfg(epochs=3, stage="stage2"), ckpt, sketches8
    )
    after = model.state_dict()
    assert report.metrics["frozen_hash_before"] == report.metrics["frozen_hash_after"]
    changed = []
    for name in after:
        if name.split(".", 1)[0] in SketchModel.BACKBONE:
            assert np.array_equal(after[name], before[name]), name
        elif not np.array_equal(after[name], before[name]):
            changed.append(name)
    assert changed  # refinement parameters actually trained


def test_stage2_optimizer_sees_only_refinement_parameters(stage1_run, sketches8):
    _, _, ckpt = stage1_run
    _, report, _ = train_stage2(
        tiny_train_cfg(stage="stage2"), ckpt, sketches8[:4]
    )
    names = report.metrics["optimizer_parameters"]
    assert names
    assert all(n.split(".", 1)[0] in SketchModel.REFINEMENT for n in names)


def test_stage2_loss_decreases(stage1_run, sketches8):
    _, _, ckpt = stage1_run
    _, report, _ = train_stage2(
        tiny_train_cfg(epochs=15, batch_size=8, peak_lr=0.003, stage="stage2"),
        ckpt,
        sketches8,
    )
    curve = report.loss_curve("total")
    assert curve[-1] < curve[0]


def test_stage2_rejects_wrong_model_config(stage1_run, sketches8):
    _, _, ckpt = stage1_run
    with pytest.raises(CheckpointMismatch):
        train_stage2(
            tiny_train_cfg(stage="stage2"),
            ckpt,
            sketches8[:2],
            model_cfg=tiny_model_cfg(d_model=16),
        )


def test_stage2_rejects_wrong_variant(stage1_run, sketches8):
    _, _, ckpt = stage1_run
    with pytest.raises(CheckpointMismatch):
        train_stage2(
            tiny_train_cfg(stage="stage2", variant="plain"), ckpt, sketches8[:2]
        )


def test_load_model_rejects_tampered_payload(tmp_path, stage1_run):
    _, _, ckpt = stage1_run
    params, meta = load_checkpoint(ckpt)
    name = sorted(params)[0]
    params[name] = params[name] + 1.0
    bad = tmp_path / "tampered.ckpt"
    save_checkpoint(str(bad), params, meta=meta)
    with pytest.raises(CheckpointMismatch):
        load_model(str(bad))


# -------------------------------------------------------------- single stage


def test_single_stage_loss_is_sum_of_stage_losses(prepared8):
    model = SketchModel(tiny_model_cfg(single_stage=True))
    rng = np.random.default_rng(0)
    batch = make_batch(prepared8[:2], model.cfg, rng)
    sample = batch.samples[0]
    total, parts = single_stage_sample_loss(model, sample)
    sigma = sample.source_index
    out = model.edit_forward(sample.raw_rows, sample.norm_rows, sigma)
    attr_targets = sample.prep.gt_attrs.copy()
    attr_targets[sigma] = sample.corrupted_attrs
    l1, p1 = stage1_loss(
        out,
        sample.prep.gt_deltas,
        sample.prep.gt_pen,
        sample.prep.gt_raster,
        attr_targets,
        model.cfg.n_mixtures,
    )
    e_gt = model.encode_rows(sample.prep.raw_rows[sigma : sigma + 1])
    l2, p2 = stage2_loss(
        out["e_refined"], out["attrs_refined"], e_gt, sample.prep.gt_attrs[sigma]
    )
    assert total.item() == pytest.approx(l1.item() + l2.item(), rel=1e-12)
    assert parts["total"] == pytest.approx(p1["total"] + p2["total"], rel=1e-12)


def test_single_stage_all_parameters_get_nonzero_gradients(prepared8):
    model = SketchModel(tiny_model_cfg(single_stage=True))
    rng = np.random.default_rng(1)
    batch = make_batch(prepared8[:4], model.cfg, rng)
    losses = [single_stage_sample_loss(model, s)[0] for s in batch.samples]
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    model.zero_grad()
    total.backward()
    for name, t in model.named_parameters():
        assert t.grad is not None, name
        assert np.linalg.norm(t.grad) > 0, name


def test_single_stage_trains_everything(sketches8):
    model, report, _ = train_single_stage(
        tiny_train_cfg(epochs=2, stage="single_stage"), tiny_model_cfg(), sketches8[:4]
    )
    assert model.cfg.single_stage
    assert report.stage == "single_stage"
    names = report.metrics["optimizer_parameters"]
    assert sorted(names) == sorted(n for n, _ in model.named_parameters())
    fresh = SketchModel(model.cfg).state_dict()
    assert all(
        not np.array_equal(data, fresh[name])
        for name, data in model.state_dict().items()
    )


def test_train_dispatch(sketches8, tmp_path):
    out = tmp_path / "dispatch"
    model, report, ckpt = train(
        tiny_train_cfg(), tiny_model_cfg(), sketches8[:4], out_dir=str(out)
    )
    assert report.stage == "stage1"
    _, report2, _ = train(
        tiny_train_cfg(stage="stage2"), tiny_model_cfg(), sketches8[:4],
        stage1_checkpoint=ckpt,
    )
    assert report2.stage == "stage2"
    with pytest.raises(ValueError):
        train(tiny_train_cfg(stage="stage2"), tiny_model_cfg(), sketches8[:4])
    _, report3, _ = train(
        tiny_train_cfg(stage="single_stage", epochs=1), tiny_model_cfg(), sketches8[:4]
    )
    assert report3.stage == "single_stage"


# ---------------------------------------------------------------- evaluation


def test_evaluate_recovery_deterministic(prepared8):
    model = SketchModel(tiny_model_cfg())
    a = evaluate_recovery(model, prepared8, seed=7, n_trials=20)
    b = evaluate_recovery(model, prepared8, seed=7, n_trials=20)
    assert a == b
    c = evaluate_recovery(model, prepared8, seed=8, n_trials=20)
    assert c != a


def test_evaluate_recovery_perfect_rig_zero_error(prepared8):
    model = SketchModel(tiny_model_cfg())
    m = evaluate_recovery(
        model, prepared8, seed=3, n_trials=24, refine_fn=perfect_refiner
    )
    assert m["component_error_mean"] == [0.0] * 5
    assert m["embedding_distance_mean"] == 0.0
    assert m["median_refined_error"] == 0.0
    assert m["improved_fraction"] == 1.0
    assert m["median_corrupted_error"] > 0


def test_evaluate_recovery_null_rig_is_chance_level(prepared8):
    model = SketchModel(tiny_model_cfg())
    m = evaluate_recovery(
        model, prepared8, seed=11, n_trials=200, refine_fn=null_refiner(seed=11)
    )
    # two iid draws from the corruption distribution: improvement is a coin
    # flip, so 200 trials land within ~3.5 binomial sigmas of 1/2
    assert abs(m["improved_fraction"] - 0.5) < 0.125
    assert m["n_trials"] == 200


def test_evaluate_recovery_untrained_model_runs(prepared8):
    model = SketchModel(tiny_model_cfg())
    m = evaluate_recovery(model, prepared8, seed=0, n_trials=16)
    assert 0.0 <= m["improved_fraction"] <= 1.0
    assert np.all(np.isfinite(m["component_error_mean"]))
    assert np.isfinite(m["embedding_distance_mean"])


def test_evaluate_recovery_rejects_unusable_data():
    model = SketchModel(tiny_model_cfg())
    with pytest.raises(DataEmpty):
        evaluate_recovery(model, [], seed=0)
    lone = Sketch(
        strokes=[
            Stroke(
                points=np.array([[0.0, 0.0], [0.5, 0.5]]),
                pen=np.array([PEN_DOWN, PEN_END]),
            )
        ]
    )
    with pytest.raises(DataEmpty):
        evaluate_recovery(model, [lone], seed=0)


def test_evaluate_recovery_accepts_checkpoint_path(tmp_path, stage1_run, prepared8):
    _, _, ckpt = stage1_run
    m = evaluate_recovery(ckpt, prepared8[:4], seed=2, n_trials=8)
    assert m["n_trials"] == 8
