"""Regenerate the committed test fixtures.

Run from the repo root: python3 scripts/make_fixtures.py
The stroke-count histogram for the quickdraw fixture is counted here with
logic kept independent of the loader implementation on purpose.
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from sketchmod.data import export_svg, generate_synthetic, rasterize, save_raster, sketch_to_dict

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"
K_MAX = 25


def write_sketch_fixture():
    sketch = generate_synthetic(7, 4)[0]
    (FIXTURES / "fixture_sketch.json").write_text(json.dumps(sketch_to_dict(sketch)))
    (FIXTURES / "fixture_sketch.svg").write_text(export_svg(sketch))
    save_raster(FIXTURES / "fixture_raster.pgm", rasterize(sketch, 64))
    print("sketch fixture:", len(sketch.strokes), "strokes")


def write_quickdraw_fixture():
    rng = np.random.default_rng(20260814)
    records = []
    expected_counts = []
    for i in range(100):
        if i in (17, 61):  # empty records the loader must skip
            records.append({"drawing": []})
            continue
        n_parts = int(rng.integers(1, 31))
        drawing = []
        for _ in range(n_parts):
            n_pts = int(rng.integers(2, 13))
            xs = np.clip(np.cumsum(rng.integers(-20, 21, n_pts)) + 128, 0, 255)
            ys = np.clip(np.cumsum(rng.integers(-20, 21, n_pts)) + 128, 0, 255)
            drawing.append([xs.tolist(), ys.tolist()])
        if i == 33:  # one degenerate empty part mixed into a valid record
            drawing.insert(1, [[], []])
        records.append({"drawing": drawing})
        # independent count: non-empty parts, capped at K_MAX
        n_strokes = sum(1 for part in drawing if len(part[0]) > 0)
        expected_counts.append(min(n_strokes, K_MAX))

    with open(FIXTURES / "quickdraw_100.ndjson", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")

    hist = {}
    for c in expected_counts:
        hist[str(c)] = hist.get(str(c), 0) + 1
    payload = {"n_records": 100, "n_skipped": 2, "histogram": hist}
    (FIXTURES / "quickdraw_100_hist.json").write_text(json.dumps(payload, indent=1))
    print("quickdraw fixture:", len(expected_counts), "loadable records")


def write_tiny_checkpoint():
    """A briefly two-stage-trained tiny model for service/CLI golden tests."""
    from sketchmod.network import ModelConfig
    from sketchmod.training import TrainConfig, train_stage1, train_stage2

    model_cfg = ModelConfig(
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
        seed=5,
    )
    from sketchmod.training import save_model

    sketches = generate_synthetic(seed=97, n=12)
    model, _, _ = train_stage1(
        TrainConfig(epochs=6, batch_size=6, seed=1), model_cfg, sketches
    )
    model, _, _ = train_stage2(
        TrainConfig(epochs=6, batch_size=6, seed=1, stage="stage2"), model, sketches
    )
    path = FIXTURES / "tiny_model.ckpt"
    save_model(str(path), model, meta={"stage": "stage2"})
    print("tiny checkpoint:", path.stat().st_size, "bytes,", model.n_parameters(), "params")


def write_schemas():
    from sketchmod.service import export_schemas

    schema_dir = pathlib.Path(__file__).resolve().parents[1] / "src" / "sketchmod" / "schemas"
    paths = export_schemas(str(schema_dir))
    print("schemas:", ", ".join(sorted(pathlib.Path(p).name for p in paths.values())))


def write_golden_reconstruct():
    """Golden SVG for `sketchmod edit --mode reconstruct` on the fixture sketch."""
    import json as _json

    from sketchmod.data import sketch_from_dict
    from sketchmod.editkit import reconstruct
    from sketchmod.training import load_model

    model, _ = load_model(str(FIXTURES / "tiny_model.ckpt"))
    sketch = sketch_from_dict(_json.loads((FIXTURES / "fixture_sketch.json").read_text()))
    result = reconstruct(model, sketch)
    (FIXTURES / "golden_reconstruct.svg").write_text(result.svg)
    print("golden reconstruct svg:", len(result.svg), "bytes")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_sketch_fixture()
    write_quickdraw_fixture()
    write_tiny_checkpoint()
    write_schemas()
    write_golden_reconstruct()


if __name__ == "__main__":
    main()
