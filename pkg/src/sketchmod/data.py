"""Dataset ingestion, procedural synthetic sketches, batching, and rendering."""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    PEN_DOWN,
    PEN_END,
    PEN_LIFT,
    GeometryError,
    NormalizedStroke,
    Sketch,
    Stroke,
    StrokeAttributes,
    corrupt_attributes,
    denormalize_stroke,
    fit_canvas,
    normalize_stroke,
    resample_stroke,
)

WIRE_VERSION = 1


class ParseError(ValueError):
    pass


class TooFewStrokes(ValueError):
    pass


# ------------------------------------------------------------- model inputs


def stroke_rows(stroke, n_points):
    """Flatten a stroke into the encoder's (x, y, pen one-hot) row."""
    rs = resample_stroke(stroke, n_points)
    onehot = np.eye(3)[rs.pen]
    return np.concatenate([rs.points, onehot], axis=1).reshape(-1)


@dataclass
class PreparedSketch:
    """Everything the model consumes for one sketch, computed once."""

    sketch: Sketch
    raw_rows: np.ndarray  # (n, n_points*5) resampled original strokes
    norm_rows: np.ndarray  # (n, n_points*5) resampled normalized strokes
    gt_attrs: np.ndarray  # (n, 5)
    gt_deltas: np.ndarray  # (n, n_points, 2), first delta is zero
    gt_pen: np.ndarray  # (n, n_points, 3) one-hot
    gt_raster: np.ndarray  # (image_size, image_size)
    normalized: list[NormalizedStroke] = field(repr=False, default_factory=list)

    @property
    def n_strokes(self):
        return len(self.sketch.strokes)


def prepare_sketch(sketch, n_points=32, image_size=64):
    raw_rows, norm_rows, attrs, deltas, pens, normalized = [], [], [], [], [], []
    for stroke in sketch.strokes:
        ns, p = normalize_stroke(stroke)
        rs = resample_stroke(stroke, n_points)
        raw_rows.append(np.concatenate([rs.points, np.eye(3)[rs.pen]], axis=1).reshape(-1))
        norm_rows.append(stroke_rows(ns.stroke, n_points))
        attrs.append(p.as_vector())
        d = np.zeros((n_points, 2))
        d[1:] = np.diff(rs.points, axis=0)
        deltas.append(d)
        pens.append(np.eye(3)[rs.pen])
        normalized.append(ns)
    return PreparedSketch(
        sketch=sketch,
        raw_rows=np.stack(raw_rows),
        norm_rows=np.stack(norm_rows),
        gt_attrs=np.stack(attrs),
        gt_deltas=np.stack(deltas),
        gt_pen=np.stack(pens),
        gt_raster=rasterize(sketch, image_size),
        normalized=normalized,
    )


@dataclass
class EditSample:
    """One corruption trial: a sketch with its source stroke re-posed by noise."""

    prep: PreparedSketch
    source_index: int
    corrupted_attrs: np.ndarray  # the noisy pose actually applied (5,)
    corrupted_stroke: Stroke
    raw_rows: np.ndarray  # prep rows with the source row replaced
    norm_rows: np.ndarray


def sketch_key(sketch):
    """Stable content hash of a sketch, used to tie corruption noise to the
    sketch itself rather than to its position in a batch."""
    h = hashlib.sha256()
    for s in sketch.strokes:
        h.update(s.points.tobytes())
        h.update(s.pen.tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def corrupt_sample(prep, rng, n_points):
    """Pick a source stroke uniformly and re-pose it with attribute noise."""
    sigma = int(rng.integers(prep.n_strokes))
    gt_attrs = StrokeAttributes.from_vector(prep.gt_attrs[sigma])
    noisy = corrupt_attributes(gt_attrs, rng)
    corrupted = denormalize_stroke(prep.normalized[sigma], noisy)
    raw_rows = prep.raw_rows.copy()
    raw_rows[sigma] = stroke_rows(corrupted, n_points)
    norm_rows = prep.norm_rows.copy()
    norm_rows[sigma] = stroke_rows(normalize_stroke(corrupted)[0].stroke, n_points)
    return EditSample(
        prep=prep,
        source_index=sigma,
        corrupted_attrs=noisy.as_vector(),
        corrupted_stroke=corrupted,
        raw_rows=raw_rows,
        norm_rows=norm_rows,
    )


@dataclass
class SketchBatch:
    """Padded batch arrays; masked slots are zero-filled."""

    normalized_points: np.ndarray  # (B, slots, n_points, 2)
    pen_states: np.ndarray  # (B, slots, n_points, 3)
    attributes: np.ndarray  # (B, slots, 5) with the source row corrupted
    stroke_mask: np.ndarray  # (B, slots) bool
    source_index: np.ndarray  # (B,)
    gt_attributes: np.ndarray  # (B, slots, 5)
    gt_raster: np.ndarray  # (B, S, S)
    gt_sequences: np.ndarray  # (B, slots, n_points, 5) deltas + pen one-hot
    samples: list[EditSample] = field(repr=False, default_factory=list)


def make_batch(sketches, cfg, rng):
    """Corrupt one source stroke per sketch and pad everything to k_max+1 slots.

    Accepts Sketch objects (prepared here) or PreparedSketch objects from a
    prior pass. Corruption noise for each sketch depends only on the rng state
    at call time and the sketch's own content, never on batch order, so the
    same (sketch, seed) pair is always corrupted the same way.
    """
    prepared = [
        s if isinstance(s, PreparedSketch) else prepare_sketch(s, cfg.n_points, cfg.image_size)
        for s in sketches
    ]
    for prep in prepared:
        if prep.n_strokes < 2:
            raise TooFewStrokes("need at least one target stroke besides the source")
    base = int(rng.integers(2**63))
    samples = [
        corrupt_sample(p, np.random.default_rng((base, sketch_key(p.sketch))), cfg.n_points)
        for p in prepared
    ]
    b = len(samples)
    slots = cfg.k_max + 1
    size = samples[0].prep.gt_raster.shape[0]
    batch = SketchBatch(
        normalized_points=np.zeros((b, slots, cfg.n_points, 2)),
        pen_states=np.zeros((b, slots, cfg.n_points, 3)),
        attributes=np.zeros((b, slots, 5)),
        stroke_mask=np.zeros((b, slots), dtype=bool),
        source_index=np.zeros(b, dtype=np.int64),
        gt_attributes=np.zeros((b, slots, 5)),
        gt_raster=np.zeros((b, size, size)),
        gt_sequences=np.zeros((b, slots, cfg.n_points, 5)),
        samples=samples,
    )
    for i, s in enumerate(samples):
        n = s.prep.n_strokes
        if n > slots:
            raise ValueError(f"sketch has {n} strokes but k_max+1 is {slots}")
        rows = s.norm_rows.reshape(n, cfg.n_points, 5)
        batch.normalized_points[i, :n] = rows[..., :2]
        batch.pen_states[i, :n] = rows[..., 2:]
        batch.attributes[i, :n] = s.prep.gt_attrs
        batch.attributes[i, s.source_index] = s.corrupted_attrs
        batch.stroke_mask[i, :n] = True
        batch.source_index[i] = s.source_index
        batch.gt_attributes[i, :n] = s.prep.gt_attrs
        batch.gt_raster[i] = s.prep.gt_raster
        batch.gt_sequences[i, :n, :, :2] = s.prep.gt_deltas
        batch.gt_sequences[i, :n, :, 2:] = s.prep.gt_pen
    return batch


# ----------------------------------------------------------------- synthetic


def _ellipse(rng, cx, cy, rx, ry, n=16, sweep=2 * np.pi, phase=-np.pi / 2):
    # Closed curves start at the bottom so the start->centroid direction sits at
    # +pi/2, away from the atan2 branch cut; a phase of 0 makes the canonical
    # orientation label flip between +pi and -pi on jitter, which is unlearnable
    # for a plain L2 regression.
    t = np.linspace(phase, phase + sweep, n)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _arc(rng, cx, cy, r, start, sweep, n=10):
    t = np.linspace(start, start + sweep, n)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def _wave(rng, x0, y0, length, amp, periods=2.0, n=14):
    t = np.linspace(0, 1, n)
    return np.stack([x0 + length * t, y0 + amp * np.sin(2 * np.pi * periods * t)], axis=1)


def _zigzag(rng, x0, y0, step, height, n_teeth=3):
    pts = [(x0, y0)]
    for i in range(n_teeth * 2):
        x0 += step
        pts.append((x0, y0 + (height if i % 2 == 0 else 0.0)))
    return np.asarray(pts, dtype=np.float64)


def _petal(rng, cx, cy, angle, length, width, n=12):
    # teardrop loop leaving and returning near (cx, cy)
    t = np.linspace(0, 2 * np.pi, n)
    local = np.stack([length * 0.5 * (1 - np.cos(t)), width * np.sin(t)], axis=1)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    return local @ rot.T + (cx, cy)


def _jit(rng, s):
    return float(rng.uniform(-s, s))


def _bug(rng):
    strokes = [
        _ellipse(rng, _jit(rng, 0.1), _jit(rng, 0.1), 1.0 + _jit(rng, 0.15), 0.7 + _jit(rng, 0.1)),
        _ellipse(rng, _jit(rng, 0.1), 0.9 + _jit(rng, 0.1), 0.35, 0.3),
        _wave(rng, -1.6 + _jit(rng, 0.1), -0.5, 0.7, 0.18 + _jit(rng, 0.05)),
        _wave(rng, 0.9 + _jit(rng, 0.1), -0.5, 0.7, 0.18 + _jit(rng, 0.05)),
    ]
    if rng.uniform() < 0.5:
        strokes.append(_arc(rng, 0.0, 0.2 + _jit(rng, 0.05), 0.45, np.pi * 0.2, np.pi * 0.6))
    if rng.uniform() < 0.5:
        strokes.append(_ellipse(rng, -0.35, 0.15, 0.12, 0.12, n=10))
        strokes.append(_ellipse(rng, 0.35, 0.15, 0.12, 0.12, n=10))
    return strokes


def _flower(rng):
    strokes = [_ellipse(rng, 0.0, 0.0, 0.4 + _jit(rng, 0.05), 0.4 + _jit(rng, 0.05))]
    n_petals = int(rng.integers(3, 6))
    for i in range(n_petals):
        angle = 2 * np.pi * i / n_petals + _jit(rng, 0.2)
        strokes.append(_petal(rng, 0.42 * np.cos(angle), 0.42 * np.sin(angle), angle,
                              0.9 + _jit(rng, 0.15), 0.3 + _jit(rng, 0.05)))
    strokes.append(_wave(rng, -0.05, -2.0 + _jit(rng, 0.1), 0.12, 0.45, periods=1.2, n=10))
    return strokes


def _face(rng):
    strokes = [
        _ellipse(rng, 0.0, 0.0, 1.2 + _jit(rng, 0.15), 1.3 + _jit(rng, 0.15)),
        _arc(rng, -0.45 + _jit(rng, 0.05), 0.35, 0.22 + _jit(rng, 0.04), np.pi * 0.15, np.pi * 0.8),
        _arc(rng, 0.45 + _jit(rng, 0.05), 0.35, 0.22 + _jit(rng, 0.04), np.pi * 0.15, np.pi * 0.8),
        _arc(rng, 0.0, -0.35 + _jit(rng, 0.07), 0.5 + _jit(rng, 0.07), np.pi * 1.15, np.pi * 0.7),
    ]
    if rng.uniform() < 0.5:
        strokes.append(_zigzag(rng, -0.6, 1.45 + _jit(rng, 0.05), 0.22, 0.3 + _jit(rng, 0.05)))
    if rng.uniform() < 0.5:
        strokes.append(_arc(rng, 0.0, 0.05 + _jit(rng, 0.03), 0.18, np.pi * 1.3, np.pi * 0.5, n=8))
    return strokes


def _kite(rng):
    strokes = [
        _ellipse(rng, 0.0, 0.6, 0.9 + _jit(rng, 0.1), 1.1 + _jit(rng, 0.1), sweep=2 * np.pi),
        _wave(rng, -0.05, -0.55, 0.14, 0.8 + _jit(rng, 0.1), periods=1.6, n=14),
        _zigzag(rng, -0.45 + _jit(rng, 0.05), -1.7, 0.18, 0.22),
    ]
    if rng.uniform() < 0.6:
        strokes.append(_arc(rng, 0.0, 0.6, 0.45 + _jit(rng, 0.05), 0.0, np.pi * 2 * 0.8, n=12))
    return strokes


CATEGORIES = {"bug": _bug, "flower": _flower, "face": _face, "kite": _kite}


def generate_synthetic(seed, n, categories=None):
    """Deterministic procedural sketches: same seed, same bits."""
    if n < 1:
        raise ValueError("n must be >= 1")
    names = list(categories or CATEGORIES)
    rng = np.random.default_rng(seed)
    sketches = []
    for i in range(n):
        builder = CATEGORIES[names[i % len(names)]]
        strokes = [Stroke.from_points(pts) for pts in builder(rng)]
        assert 3 <= len(strokes) <= 8
        last = strokes[-1]
        pen = last.pen.copy()
        pen[-1] = PEN_END
        strokes[-1] = Stroke(last.points, pen)
        sketches.append(fit_canvas(Sketch(strokes)))
    return sketches


# ---------------------------------------------------------------- quickdraw


def _strokes_from_stroke3(array, record_index):
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ParseError(f"record {record_index}: expected (N, 3) deltas, got {arr.shape}")
    points = np.cumsum(arr[:, :2], axis=0)
    pen = arr[:, 2].astype(np.int64)
    if not np.isin(pen, (PEN_DOWN, PEN_LIFT, PEN_END)).all():
        raise ParseError(f"record {record_index}: pen states outside {{0,1,2}}")
    strokes = []
    start = 0
    for i, state in enumerate(pen):
        if state in (PEN_LIFT, PEN_END):
            strokes.append(Stroke(points[start : i + 1], pen[start : i + 1]))
            start = i + 1
    if start < len(pen):  # trailing pen-down run without a lift marker
        tail_pen = pen[start:].copy()
        tail_pen[-1] = PEN_LIFT
        strokes.append(Stroke(points[start:], tail_pen))
    return strokes


def load_quickdraw(path, k_max=25):
    """Read packed .npz/.npy stroke arrays or newline-delimited JSON records."""
    path = str(path)
    records = []
    if path.endswith(".ndjson") or path.endswith(".jsonl"):
        with open(path) as fh:
            for idx, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    drawing = rec["drawing"]
                    strokes = []
                    for part in drawing:
                        xs, ys = part[0], part[1]
                        if len(xs) != len(ys):
                            raise ParseError(f"record {idx}: x/y length mismatch")
                        if len(xs) == 0:
                            continue
                        pts = np.stack([xs, ys], axis=1).astype(np.float64)
                        pen = np.full(len(xs), PEN_DOWN, dtype=np.int64)
                        pen[-1] = PEN_LIFT
                        strokes.append(Stroke(pts, pen))
                except (json.JSONDecodeError, KeyError, TypeError, GeometryError) as exc:
                    raise ParseError(f"record {idx}: {exc}") from None
                records.append((idx, strokes))
    else:
        blob = np.load(path, allow_pickle=True, encoding="latin1")
        if hasattr(blob, "files"):
            key = next((k for k in ("train", "sketches", "arr_0") if k in blob.files), None)
            if key is None:
                raise ParseError(f"{path}: no recognized array key in {blob.files}")
            arrays = blob[key]
        else:
            arrays = blob
        if isinstance(arrays, np.ndarray) and arrays.ndim == 2:
            arrays = [arrays]  # a single packed record
        for idx, arr in enumerate(arrays):
            try:
                records.append((idx, _strokes_from_stroke3(arr, idx)))
            except GeometryError as exc:
                raise ParseError(f"record {idx}: {exc}") from None

    sketches, skipped = [], 0
    for idx, strokes in records:
        if not strokes:
            skipped += 1
            continue
        if len(strokes) > k_max:
            strokes = strokes[:k_max]
        last = strokes[-1]
        pen = last.pen.copy()
        pen[-1] = PEN_END
        strokes[-1] = Stroke(last.points, pen)
        sketches.append(fit_canvas(Sketch(strokes)))
    if skipped:
        warnings.warn(f"skipped {skipped} empty sketch records", stacklevel=2)
    return sketches


# ----------------------------------------------------------------- rendering


def rasterize(sketch, size=64):
    """Anti-aliased white-on-black raster; intensity falls linearly to zero at
    one pixel from the segment, overlaps keep the maximum."""
    img = np.zeros((size, size))
    scale = (size - 1) / 2.0
    for stroke in sketch.strokes:
        pts = (stroke.points + 1.0) * scale
        for a, b in zip(pts[:-1], pts[1:]):
            ab = b - a
            denom = float(ab @ ab)
            if denom == 0.0:  # zero-length segments (and point strokes) draw nothing
                continue
            x_lo = max(int(np.floor(min(a[0], b[0]))) - 1, 0)
            x_hi = min(int(np.ceil(max(a[0], b[0]))) + 1, size - 1)
            y_lo = max(int(np.floor(min(a[1], b[1]))) - 1, 0)
            y_hi = min(int(np.ceil(max(a[1], b[1]))) + 1, size - 1)
            if x_lo > x_hi or y_lo > y_hi:
                continue
            ys, xs = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
            px = np.stack([xs, ys], axis=-1).astype(np.float64)
            t = np.clip(((px - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[..., None] * ab
            d = np.linalg.norm(px - proj, axis=-1)
            window = img[y_lo : y_hi + 1, x_lo : x_hi + 1]
            np.maximum(window, np.clip(1.0 - d, 0.0, 1.0), out=window)
    return img


def save_raster(path, raster):
    """Write a [0,1] grayscale raster as PGM or PNG depending on the suffix."""
    path = str(path)
    data = np.clip(np.round(np.asarray(raster) * 255.0), 0, 255).astype(np.uint8)
    if path.endswith(".pgm"):
        h, w = data.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode())
            fh.write(data.tobytes())
    else:
        from PIL import Image

        Image.fromarray(data, mode="L").save(path)


# ------------------------------------------------------------- serialization


def sketch_to_dict(sketch):
    return {
        "version": WIRE_VERSION,
        "strokes": [
            {"points": s.points.tolist(), "pen": s.pen.tolist()} for s in sketch.strokes
        ],
    }


def sketch_from_dict(d):
    if d.get("version") != WIRE_VERSION:
        raise ParseError(f"unsupported sketch version {d.get('version')!r}")
    try:
        strokes = [
            Stroke(np.asarray(s["points"], dtype=np.float64),
                   np.asarray(s["pen"], dtype=np.int64))
            for s in d["strokes"]
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(str(exc)) from None
    return Sketch(strokes)


def export_svg(sketch, stroke_ids=False, highlight=None):
    """One path per stroke over the [-1, 1] canvas (y grows downward)."""
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="-1 -1 2 2">',
    ]

    def fmt(v):
        return repr(float(v))  # exact round-trip formatting

    for i, s in enumerate(sketch.strokes):
        cmds = [f"M {fmt(s.points[0][0])} {fmt(s.points[0][1])}"]
        cmds += [f"L {fmt(p[0])} {fmt(p[1])}" for p in s.points[1:]]
        color = "#d22" if highlight == i else "#111"
        ident = f' id="stroke-{i}"' if stroke_ids else ""
        parts.append(
            f'<path{ident} d="{" ".join(cmds)}" fill="none" '
            f'stroke="{color}" stroke-width="0.02"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


_PATH_D = re.compile(r'<path[^>]*\bd="([^"]+)"')
_NUM = re.compile(r"[-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?")


def import_svg(text):
    """Minimal reader for the paths this package exports (M/L commands only)."""
    strokes = []
    for d in _PATH_D.findall(text):
        nums = [float(x) for x in _NUM.findall(d)]
        if len(nums) < 2 or len(nums) % 2:
            raise ParseError(f"malformed path data: {d[:40]}...")
        pts = np.asarray(nums, dtype=np.float64).reshape(-1, 2)
        strokes.append(Stroke.from_points(pts))
    if not strokes:
        raise ParseError("no path elements found")
    return Sketch(strokes)


# ----------------------------------------------------------------- datasets


@dataclass
class DatasetSpec:
    """Where sketches come from and how they split into train/val/test."""

    source: str  # "synthetic" or a path to a quickdraw file
    seed: int = 0
    n: int = 64
    categories: tuple = tuple(sorted(CATEGORIES))
    fractions: tuple = (0.8, 0.1, 0.1)
    k_max: int = 25

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.fractions}")

    def load(self):
        """Materialize (train, val, test) sketch lists."""
        if self.source == "synthetic":
            sketches = generate_synthetic(self.seed, self.n, self.categories)
        else:
            sketches = load_quickdraw(self.source, self.k_max)
        n = len(sketches)
        n_train = int(round(self.fractions[0] * n))
        n_val = int(round(self.fractions[1] * n))
        return (
            sketches[:n_train],
            sketches[n_train : n_train + n_val],
            sketches[n_train + n_val :],
        )


def save_dataset(path, sketches):
    payload = {
        "version": WIRE_VERSION,
        "sketches": [sketch_to_dict(s) for s in sketches],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_dataset(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != WIRE_VERSION:
        raise ParseError(f"unsupported dataset version {payload.get('version')!r}")
    return [sketch_from_dict(d) for d in payload["sketches"]]
