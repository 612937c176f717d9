"""User-facing edit operations: stroke expansion, replacement, attribute
manipulation, and reconstruction.

Every operation comes in two flavors. The default decodes the whole edited
sketch through the trained generators (target strokes are regenerated around
the refined source). Geometry-only mode keeps the original target strokes
untouched and composites the deterministically re-posed source — refinement
still runs the network for expand/replace, but nothing is regenerated; for
manipulate it is pure geometry and needs no model at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import export_svg, rasterize, stroke_rows
from .geometry import (
    PEN_END,
    PEN_LIFT,
    Sketch,
    Stroke,
    StrokeAttributes,
    apply_attributes,
    denormalize_stroke,
    normalize_stroke,
)
from .network import decode_sequences

MODES = ("expand", "replace", "manipulate", "reconstruct")
ATTRIBUTE_KEYS = ("a", "b", "theta", "log_tau1", "log_tau2")


class ModelNotLoaded(RuntimeError):
    """An operation that needs the network was invoked without a model."""


class EmptyTarget(ValueError):
    """The edit target carries no strokes."""


class IndexOutOfRange(IndexError):
    """A stroke index does not exist in the target sketch."""


class NonFiniteOverride(ValueError):
    """An attribute override contains NaN/Inf."""


@dataclass(frozen=True)
class EditOptions:
    """decode_temperature None/0 decodes greedily; positive values sample
    with the given temperature, seeded for reproducibility."""

    decode_temperature: float | None = None
    seed: int = 0
    geometry_only: bool = False
    image_size: int | None = None


@dataclass
class EditRequest:
    mode: str
    target: Sketch
    source: Stroke | None = None
    replace_index: int | None = None
    attribute_overrides: dict = field(default_factory=dict)
    decode_temperature: float | None = None
    seed: int = 0
    geometry_only: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in ("expand", "replace") and self.source is None:
            raise ValueError(f"mode {self.mode!r} requires a source stroke")
        if self.mode == "replace" and self.replace_index is None:
            raise ValueError("mode 'replace' requires replace_index")
        if self.decode_temperature is not None and self.decode_temperature < 0:
            raise ValueError(
                f"decode_temperature must be >= 0, got {self.decode_temperature}"
            )
        return self

    def options(self):
        return EditOptions(
            decode_temperature=self.decode_temperature,
            seed=self.seed,
            geometry_only=self.geometry_only,
        )


@dataclass
class EditResult:
    edited: Sketch
    refined_attributes: StrokeAttributes | None
    raster: np.ndarray
    svg: str
    mode: str
    source_index: int | None = None


# ------------------------------------------------------------------- helpers


def _require_target(target):
    if target is None or len(target.strokes) == 0:
        raise EmptyTarget("target sketch has no strokes")


def _with_terminators(strokes):
    """Enforce the sketch convention (every stroke ends PEN_LIFT except the
    final one, which ends PEN_END) rewriting only strokes that violate it."""
    fixed = []
    for i, s in enumerate(strokes):
        want = PEN_END if i == len(strokes) - 1 else PEN_LIFT
        if s.pen[-1] == want or (want == PEN_LIFT and s.pen[-1] != PEN_END):
            fixed.append(s)
        else:
            pen = s.pen.copy()
            pen[-1] = want
            fixed.append(Stroke(s.points, pen))
    return fixed


def _rows(strokes, n_points):
    raw = np.stack([stroke_rows(s, n_points) for s in strokes])
    norm = np.stack(
        [stroke_rows(normalize_stroke(s)[0].stroke, n_points) for s in strokes]
    )
    return raw, norm


def _decode(seq_params_data, starts, n_mixtures, opts):
    if opts.decode_temperature is None or opts.decode_temperature == 0:
        return decode_sequences(seq_params_data, starts, n_mixtures, mode="greedy")
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 0x5EED]))
    return decode_sequences(
        seq_params_data,
        starts,
        n_mixtures,
        mode="temperature",
        temperature=opts.decode_temperature,
        rng=rng,
    )


def _result(edited, refined, mode, source_index, model, opts):
    size = opts.image_size or (model.cfg.image_size if model is not None else 64)
    return EditResult(
        edited=edited,
        refined_attributes=refined,
        raster=rasterize(edited, size),
        svg=export_svg(edited, highlight=source_index),
        mode=mode,
        source_index=source_index,
    )


def _edit_with_source(model, before, source, after, mode, opts):
    """Shared expand/replace pipeline; the source sits at index len(before)."""
    if model is None:
        raise ModelNotLoaded(f"mode {mode!r} requires a trained model")
    strokes = list(before) + [source] + list(after)
    sigma = len(before)
    raw, norm = _rows(strokes, model.cfg.n_points)
    if opts.geometry_only:
        out = model.refine_forward(raw, norm, sigma)
        refined = StrokeAttributes.from_vector(out["attrs_refined"].data[0])
        reposed = denormalize_stroke(normalize_stroke(source)[0], refined)
        edited = Sketch(_with_terminators(list(before) + [reposed] + list(after)))
    else:
        out = model.edit_forward(raw, norm, sigma)
        refined = StrokeAttributes.from_vector(out["attrs_refined"].data[0])
        decoded = _decode(
            out["seq_params"].data,
            out["mix_attrs"].data[:, :2],
            model.cfg.n_mixtures,
            opts,
        )
        edited = Sketch(decoded)
    return _result(edited, refined, mode, sigma, model, opts)


def _override_attrs(base: StrokeAttributes, overrides: dict) -> StrokeAttributes:
    kw = {}
    log_tau = base.log_tau.copy()
    for key, value in overrides.items():
        if key not in ATTRIBUTE_KEYS:
            raise ValueError(f"unknown attribute {key!r}, expected one of {ATTRIBUTE_KEYS}")
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteOverride(f"override {key}={value} is not finite")
        if key == "log_tau1":
            log_tau[0] = value
        elif key == "log_tau2":
            log_tau[1] = value
        else:
            kw[key] = value
    return base.replace(log_tau=log_tau, **kw)


def _check_override_indices(overrides, n):
    for index in overrides:
        if not 0 <= int(index) < n:
            raise IndexOutOfRange(f"override index {index} out of range for {n} strokes")


# ---------------------------------------------------------------- operations


def expand_stroke(model, target: Sketch, source: Stroke, opts=EditOptions()):
    """Add the source stroke to the target; the refiner re-poses it. Result
    has K+1 strokes, the source last."""
    _require_target(target)
    return _edit_with_source(model, target.strokes, source, [], "expand", opts)


def replace_stroke(model, target: Sketch, index, source: Stroke, opts=EditOptions()):
    """Swap the stroke at `index` for the source: remove it, then run the
    expansion pipeline with the source in its slot."""
    _require_target(target)
    if not 0 <= index < len(target.strokes):
        raise IndexOutOfRange(
            f"replace_index {index} out of range for {len(target.strokes)} strokes"
        )
    return _edit_with_source(
        model,
        target.strokes[:index],
        source,
        target.strokes[index + 1 :],
        "replace",
        opts,
    )


def manipulate_attributes(model, sketch: Sketch, overrides=None, opts=EditOptions()):
    """Override pose attributes of addressed strokes, then regenerate (model
    mode) or re-pose exactly those strokes in place (geometry-only mode).
    Empty overrides reduce to reconstruction."""
    _require_target(sketch)
    overrides = {int(k): dict(v) for k, v in (overrides or {}).items()}
    _check_override_indices(overrides, len(sketch.strokes))
    if opts.geometry_only:
        strokes = list(sketch.strokes)
        applied = None
        for index, ov in sorted(overrides.items()):
            base = normalize_stroke(strokes[index])[1]
            applied = _override_attrs(base, ov)
            strokes[index] = apply_attributes(strokes[index], applied)
        edited = Sketch(strokes)
        single = list(overrides)[0] if len(overrides) == 1 else None
        return _result(
            edited, applied if single is not None else None, "manipulate",
            single, model, opts,
        )
    return _generate(model, sketch, overrides, "manipulate", opts)


def reconstruct(model, sketch: Sketch, opts=EditOptions()):
    """Full pipeline without corruption or refinement; geometry-only mode is
    the identity on the sketch."""
    _require_target(sketch)
    if opts.geometry_only:
        return _result(sketch, None, "reconstruct", None, model, opts)
    return _generate(model, sketch, {}, "reconstruct", opts)


def _generate(model, sketch, overrides, mode, opts):
    """Predict attributes, apply overrides ahead of mixing, decode."""
    if model is None:
        raise ModelNotLoaded(f"mode {mode!r} requires a trained model")
    raw, norm = _rows(sketch.strokes, model.cfg.n_points)
    e = model.encode_rows(raw)
    e_bar = model.encode_rows(norm)
    attrs = model.predict_attributes(e, e_bar).data.copy()
    applied = None
    for index, ov in sorted(overrides.items()):
        applied = _override_attrs(StrokeAttributes.from_vector(attrs[index]), ov)
        attrs[index] = applied.as_vector()
    mixed = model.mixer(e_bar, attrs)
    seq_params = model.gen_seq(mixed)
    decoded = _decode(seq_params.data, attrs[:, :2], model.cfg.n_mixtures, opts)
    single = list(overrides)[0] if len(overrides) == 1 else None
    return _result(
        Sketch(decoded),
        applied if single is not None else None,
        mode,
        single,
        model,
        opts,
    )


def apply_edit(model, request: EditRequest) -> EditResult:
    """Dispatch a validated EditRequest to its operation."""
    request.validate()
    opts = request.options()
    if request.mode == "expand":
        return expand_stroke(model, request.target, request.source, opts)
    if request.mode == "replace":
        return replace_stroke(
            model, request.target, request.replace_index, request.source, opts
        )
    if request.mode == "manipulate":
        return manipulate_attributes(
            model, request.target, request.attribute_overrides, opts
        )
    return reconstruct(model, request.target, opts)
