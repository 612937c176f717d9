"""Dataset, batching, rasterization, and serialization contracts."""

import json
import pathlib
import warnings

import numpy as np
import pytest

from sketchmod.data import (
    DatasetSpec,
    ParseError,
    TooFewStrokes,
    export_svg,
    generate_synthetic,
    import_svg,
    load_dataset,
    load_quickdraw,
    make_batch,
    prepare_sketch,
    rasterize,
    save_dataset,
    save_raster,
    sketch_from_dict,
    sketch_key,
    sketch_to_dict,
    stroke_rows,
)
from sketchmod.geometry import (
    ANGLE_NOISE,
    PEN_END,
    PEN_LIFT,
    POS_NOISE,
    SCALE_EPS,
    SCALE_NOISE,
    Sketch,
    Stroke,
    fit_canvas,
    normalize_stroke,
)
from sketchmod.network import ModelConfig

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

TINY = ModelConfig(
    d_model=8,
    n_heads=2,
    n_points=8,
    n_mixtures=2,
    image_size=16,
    k_max=25,
    encoder_hidden=16,
    predictor_hidden=12,
    offset_hidden=10,
    n_refiner_layers=2,
    n_mixer_layers=2,
)


def sketches_equal(a, b):
    return len(a.strokes) == len(b.strokes) and all(
        np.array_equal(x.points, y.points) and np.array_equal(x.pen, y.pen)
        for x, y in zip(a.strokes, b.strokes)
    )


# ----------------------------------------------------------------- synthetic


def test_synthetic_deterministic():
    a = generate_synthetic(7, 64)
    b = generate_synthetic(7, 64)
    assert len(a) == len(b) == 64
    assert all(sketches_equal(x, y) for x, y in zip(a, b))


def test_synthetic_bounds_and_stroke_counts():
    for sketch in generate_synthetic(3, 48):
        assert 3 <= len(sketch.strokes) <= 8
        pts = np.concatenate([s.points for s in sketch.strokes])
        assert pts.min() >= -1.0 - 1e-12 and pts.max() <= 1.0 + 1e-12


def test_synthetic_normalizable_without_degenerate_clamp():
    degenerate = total = 0
    for sketch in generate_synthetic(11, 64):
        for stroke in sketch.strokes:
            _, attrs = normalize_stroke(stroke)
            total += 1
            degenerate += int(np.exp(attrs.log_tau).min() <= SCALE_EPS * 1.01)
    assert degenerate / total <= 0.01


def test_synthetic_different_seeds_differ():
    a = generate_synthetic(1, 8)
    b = generate_synthetic(2, 8)
    assert not all(
        sketches_equal(x, y) for x, y in zip(a, b) if len(x.strokes) == len(y.strokes)
    ) or any(len(x.strokes) != len(y.strokes) for x, y in zip(a, b))


def test_synthetic_rejects_bad_n():
    with pytest.raises(ValueError):
        generate_synthetic(0, 0)


# ------------------------------------------------------------------- prepare


def test_stroke_rows_layout():
    stroke = Stroke.from_points([(0.0, 0.0), (1.0, 0.0)])
    rows = stroke_rows(stroke, 4).reshape(4, 5)
    assert np.allclose(rows[:, 0], [0, 1 / 3, 2 / 3, 1.0])
    assert np.allclose(rows[:, 1], 0.0)
    # pen one-hot: down, down, down, lift
    assert np.array_equal(rows[:, 2:], np.eye(3)[[0, 0, 0, 1]])


def test_prepare_sketch_shapes_and_deltas():
    sketch = generate_synthetic(5, 1)[0]
    n = len(sketch.strokes)
    prep = prepare_sketch(sketch, n_points=8, image_size=16)
    assert prep.raw_rows.shape == (n, 40)
    assert prep.norm_rows.shape == (n, 40)
    assert prep.gt_attrs.shape == (n, 5)
    assert prep.gt_deltas.shape == (n, 8, 2)
    assert prep.gt_pen.shape == (n, 8, 3)
    assert prep.gt_raster.shape == (16, 16)
    # deltas cumulative-sum back to the resampled points
    raw = prep.raw_rows.reshape(n, 8, 5)
    assert np.all(prep.gt_deltas[:, 0] == 0.0)
    rebuilt = raw[:, :1, :2] + np.cumsum(prep.gt_deltas, axis=1)
    assert np.allclose(rebuilt, raw[..., :2], atol=1e-12)
    # normalized rows live in [0, 1]
    norm = prep.norm_rows.reshape(n, 8, 5)[..., :2]
    assert norm.min() >= -1e-9 and norm.max() <= 1 + 1e-9


# --------------------------------------------------------------------- batch


def test_batch_shapes_masks_and_zero_fill():
    cfg = TINY
    sketches = generate_synthetic(5, 4)
    rng = np.random.default_rng(3)
    batch = make_batch(sketches, cfg, rng)
    b, slots = 4, cfg.k_max + 1
    assert batch.normalized_points.shape == (b, slots, cfg.n_points, 2)
    assert batch.pen_states.shape == (b, slots, cfg.n_points, 3)
    assert batch.attributes.shape == (b, slots, 5)
    assert batch.gt_raster.shape == (b, cfg.image_size, cfg.image_size)
    assert batch.gt_sequences.shape == (b, slots, cfg.n_points, 5)
    for i, sketch in enumerate(sketches):
        n = len(sketch.strokes)
        assert batch.stroke_mask[i].sum() == n
        assert 0 <= batch.source_index[i] < n
        dead = ~batch.stroke_mask[i]
        for field in (
            batch.normalized_points,
            batch.pen_states,
            batch.attributes,
            batch.gt_attributes,
            batch.gt_sequences,
        ):
            assert np.all(field[i][dead] == 0.0)
            assert not np.isnan(field[i]).any()
    # exactly one corrupted row per sample: differs from gt at sigma only
    for i in range(b):
        diff = np.any(batch.attributes[i] != batch.gt_attributes[i], axis=1)
        assert diff.sum() == 1 and diff[batch.source_index[i]]


def test_batch_source_index_uniform():
    cfg = TINY
    sketch = generate_synthetic(5, 8)[2]
    n = len(sketch.strokes)
    assert n == 5  # the chi-square below is calibrated for 5 strokes
    prep = prepare_sketch(sketch, cfg.n_points, cfg.image_size)
    rng = np.random.default_rng(0)
    counts = np.zeros(n)
    draws = 10_000
    for _ in range(draws):
        counts[make_batch([prep], cfg, rng).source_index[0]] += 1
    expected = draws / n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 4 dof: mean 4, sd sqrt(8); 3 sigma above the mean
    assert chi2 < 4 + 3 * np.sqrt(8.0), counts


def test_batch_corruption_tied_to_sketch_not_order():
    cfg = TINY
    a, b = generate_synthetic(9, 2)
    b1 = make_batch([a, b], cfg, np.random.default_rng(42))
    b2 = make_batch([b, a], cfg, np.random.default_rng(42))
    assert b1.source_index[0] == b2.source_index[1]
    assert np.array_equal(
        b1.samples[0].corrupted_attrs, b2.samples[1].corrupted_attrs
    )
    assert np.array_equal(b1.samples[1].corrupted_attrs, b2.samples[0].corrupted_attrs)


def test_batch_same_seed_same_noise_repeated():
    cfg = TINY
    sketch = generate_synthetic(9, 1)[0]
    x = make_batch([sketch], cfg, np.random.default_rng(7)).samples[0]
    y = make_batch([sketch], cfg, np.random.default_rng(7)).samples[0]
    assert x.source_index == y.source_index
    assert np.array_equal(x.corrupted_attrs, y.corrupted_attrs)


def test_batch_noise_within_declared_ranges():
    cfg = TINY
    prepared = [
        prepare_sketch(s, cfg.n_points, cfg.image_size)
        for s in generate_synthetic(13, 8)
    ]
    rng = np.random.default_rng(5)
    for _ in range(300):
        batch = make_batch(prepared, cfg, rng)
        for s in batch.samples:
            gt = s.prep.gt_attrs[s.source_index]
            eps = s.corrupted_attrs - gt
            assert POS_NOISE[0] <= eps[0] <= POS_NOISE[1]
            assert POS_NOISE[0] <= eps[1] <= POS_NOISE[1]
            assert ANGLE_NOISE[0] <= eps[2] <= ANGLE_NOISE[1]
            assert np.log(SCALE_NOISE[0]) - 1e-12 <= eps[3] <= np.log(SCALE_NOISE[1]) + 1e-12
            assert np.log(SCALE_NOISE[0]) - 1e-12 <= eps[4] <= np.log(SCALE_NOISE[1]) + 1e-12


def test_batch_corrupted_stroke_is_reposed_shape():
    """The corrupted stroke is the GT shape under the noisy pose."""
    cfg = TINY
    sketch = generate_synthetic(21, 1)[0]
    batch = make_batch([sketch], cfg, np.random.default_rng(1))
    s = batch.samples[0]
    ns, attrs = normalize_stroke(s.corrupted_stroke)
    # pose of the corrupted stroke == the corrupted attributes
    # (theta may wrap by 2*pi: compare its cos/sin instead)
    assert np.allclose(attrs.as_vector()[:2], s.corrupted_attrs[:2], atol=1e-9)
    assert np.allclose(np.cos(attrs.theta), np.cos(s.corrupted_attrs[2]), atol=1e-9)
    assert np.allclose(np.sin(attrs.theta), np.sin(s.corrupted_attrs[2]), atol=1e-9)
    assert np.allclose(attrs.log_tau, s.corrupted_attrs[3:], atol=1e-9)
    # canonical shape unchanged by the re-posing
    gt_ns = s.prep.normalized[s.source_index]
    assert np.allclose(ns.stroke.points, gt_ns.stroke.points, atol=1e-9)


def test_batch_rejects_single_stroke_sketch():
    cfg = TINY
    lone = Sketch([Stroke.from_points([(0, 0), (1, 1)])])
    with pytest.raises(TooFewStrokes):
        make_batch([lone], cfg, np.random.default_rng(0))


def test_sketch_key_content_addressed():
    a = generate_synthetic(7, 1)[0]
    b = generate_synthetic(7, 1)[0]
    assert sketch_key(a) == sketch_key(b)
    shifted = Sketch([Stroke(s.points + 0.25, s.pen.copy()) for s in a.strokes])
    assert sketch_key(a) != sketch_key(shifted)


# ----------------------------------------------------------------- rasterize


def test_rasterize_horizontal_line_single_bright_row():
    # odd size puts y=0 exactly on a pixel row; neighbors get zero intensity
    line = Sketch([Stroke.from_points([(-1.0, 0.0), (1.0, 0.0)])])
    img = rasterize(line, 65)
    bright = np.flatnonzero(img.max(axis=1) >= 0.5)
    assert bright.tolist() == [32]
    assert np.all(img[32] == 1.0)
    assert img[31].max() < 0.5 and img[33].max() < 0.5


def test_rasterize_zero_length_strokes_all_zero():
    dot = Sketch(
        [
            Stroke.from_points([(0.3, -0.2), (0.3, -0.2)]),
            Stroke.from_points([(0.0, 0.0)]),
        ]
    )
    assert rasterize(dot, 64).sum() == 0.0


def test_rasterize_range_and_purity():
    sketch = generate_synthetic(7, 1)[0]
    a = rasterize(sketch, 64)
    b = rasterize(sketch, 64)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert a.max() > 0.5  # something was drawn


def test_rasterize_golden_bytes(tmp_path):
    sketch = sketch_from_dict(json.loads((FIXTURES / "fixture_sketch.json").read_text()))
    out = tmp_path / "raster.pgm"
    save_raster(out, rasterize(sketch, 64))
    assert out.read_bytes() == (FIXTURES / "fixture_raster.pgm").read_bytes()


def test_save_raster_png(tmp_path):
    from PIL import Image

    sketch = generate_synthetic(7, 1)[0]
    raster = rasterize(sketch, 64)
    out = tmp_path / "raster.png"
    save_raster(out, raster)
    back = np.asarray(Image.open(out), dtype=np.float64) / 255.0
    assert back.shape == (64, 64)
    assert np.abs(back - raster).max() <= 0.5 / 255.0 + 1e-9


# ----------------------------------------------------------------- quickdraw


def test_quickdraw_stroke3_hand_example(tmp_path):
    rec = np.array(
        [[0, 0, 0], [10, 0, 0], [0, 10, 1], [5, 5, 0], [0, 0, 2]], dtype=np.float64
    )
    path = tmp_path / "mini.npz"
    np.savez(path, train=np.array([rec], dtype=object))
    sketches = load_quickdraw(path)
    assert len(sketches) == 1
    got = sketches[0]
    assert len(got.strokes) == 2
    expected = fit_canvas(
        Sketch(
            [
                Stroke(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]), [0, 0, 1]),
                Stroke(np.array([[15.0, 15.0], [15.0, 15.0]]), [0, 2]),
            ]
        )
    )
    assert sketches_equal(got, expected)


def test_quickdraw_truncates_to_k_max(tmp_path):
    deltas = []
    for i in range(30):
        deltas += [[1, 1, 0], [2, 0, 1]]
    rec = np.array(deltas, dtype=np.float64)
    path = tmp_path / "many.npz"
    np.savez(path, train=np.array([rec], dtype=object))
    got = load_quickdraw(path, k_max=25)[0]
    assert len(got.strokes) == 25
    assert got.strokes[-1].pen[-1] == PEN_END  # end marker survives truncation


def test_quickdraw_parse_error_carries_record_index(tmp_path):
    good = np.array([[0, 0, 0], [1, 1, 1]], dtype=np.float64)
    bad = np.array([[0, 0], [1, 1]], dtype=np.float64)  # wrong width
    packed = np.empty(2, dtype=object)
    packed[0], packed[1] = good, bad
    path = tmp_path / "bad.npz"
    np.savez(path, train=packed)
    with pytest.raises(ParseError, match="record 1"):
        load_quickdraw(path)


def test_quickdraw_nonfinite_is_parse_error(tmp_path):
    bad = np.array([[0, 0, 0], [np.nan, 1, 1]], dtype=np.float64)
    path = tmp_path / "nan.npz"
    np.savez(path, train=np.array([bad, bad], dtype=object))
    with pytest.raises(ParseError, match="record 0"):
        load_quickdraw(path)


def test_quickdraw_ndjson_fixture_histogram():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sketches = load_quickdraw(FIXTURES / "quickdraw_100.ndjson")
    ref = json.loads((FIXTURES / "quickdraw_100_hist.json").read_text())
    assert len(sketches) == ref["n_records"] - ref["n_skipped"]
    hist = {}
    for s in sketches:
        hist[str(len(s.strokes))] = hist.get(str(len(s.strokes)), 0) + 1
    assert hist == ref["histogram"]
    skips = [w for w in caught if "skipped 2 empty" in str(w.message)]
    assert len(skips) == 1
    # canvas-normalized output
    for s in sketches[:10]:
        pts = np.concatenate([st.points for st in s.strokes])
        assert pts.min() >= -1.0 - 1e-9 and pts.max() <= 1.0 + 1e-9


def test_quickdraw_single_packed_record(tmp_path):
    rec = np.array([[0, 0, 0], [3, 4, 1], [1, 0, 0], [0, 2, 2]], dtype=np.float64)
    path = tmp_path / "single.npy"
    np.save(path, rec)
    got = load_quickdraw(path)
    assert len(got) == 1 and len(got[0].strokes) == 2


# --------------------------------------------------------------- svg / json


def test_svg_stroke_count_and_round_trip():
    sketch = generate_synthetic(7, 1)[0]
    svg = export_svg(sketch)
    assert svg.count("<path") == len(sketch.strokes)
    assert 'viewBox="-1 -1 2 2"' in svg
    back = import_svg(svg)
    assert len(back.strokes) == len(sketch.strokes)
    for x, y in zip(back.strokes, sketch.strokes):
        assert np.allclose(x.points, y.points, atol=1e-6)


def test_svg_golden_bytes():
    sketch = sketch_from_dict(json.loads((FIXTURES / "fixture_sketch.json").read_text()))
    assert export_svg(sketch) == (FIXTURES / "fixture_sketch.svg").read_text()


def test_svg_highlight_and_ids():
    sketch = generate_synthetic(7, 1)[0]
    svg = export_svg(sketch, stroke_ids=True, highlight=2)
    assert 'id="stroke-0"' in svg and 'id="stroke-2"' in svg
    assert svg.count("#d22") == 1


def test_import_svg_rejects_garbage():
    with pytest.raises(ParseError):
        import_svg("<svg></svg>")
    with pytest.raises(ParseError):
        import_svg('<svg><path d="M 1"/></svg>')


def test_sketch_json_round_trip_identity():
    sketch = generate_synthetic(7, 2)[1]
    back = sketch_from_dict(json.loads(json.dumps(sketch_to_dict(sketch))))
    assert sketches_equal(back, sketch)


def test_sketch_dict_version_check():
    with pytest.raises(ParseError):
        sketch_from_dict({"version": 99, "strokes": []})


def test_dataset_cache_round_trip(tmp_path):
    sketches = generate_synthetic(7, 5)
    path = tmp_path / "cache.json"
    save_dataset(path, sketches)
    back = load_dataset(path)
    assert len(back) == 5
    assert all(sketches_equal(x, y) for x, y in zip(back, sketches))


def test_dataset_spec_splits_and_validation():
    spec = DatasetSpec(source="synthetic", seed=7, n=20, fractions=(0.5, 0.25, 0.25))
    train, val, test = spec.load()
    assert (len(train), len(val), len(test)) == (10, 5, 5)
    with pytest.raises(ValueError):
        DatasetSpec(source="synthetic", fractions=(0.5, 0.2, 0.2))
