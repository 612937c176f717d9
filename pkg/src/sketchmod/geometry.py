"""Exact stroke geometry: pose attributes, normalization, offsets, corruption.

A stroke is an ordered polyline with per-point pen states. Its editable pose
is a 5-vector [a, b, theta, log_tau1, log_tau2]: starting position, the angle
of the start-to-center direction, and the log extents of the curve after
rotating that direction onto the +x axis. Normalization factors a stroke into
(canonical shape in [0,1]^2, pose vector) and is exactly invertible.

All functions here are pure and operate on immutable inputs; callers own the
random source used for corruption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PEN_DOWN = 0
PEN_LIFT = 1
PEN_END = 2

PEN_NAMES = {PEN_DOWN: "down", PEN_LIFT: "lift", PEN_END: "end"}
PEN_CODES = {v: k for k, v in PEN_NAMES.items()}

# extents are clamped here before log / division so degenerate strokes stay finite
SCALE_EPS = 1e-6

# corruption noise ranges: position, orientation, multiplicative scale
POS_NOISE = (-1.0, 1.0)
ANGLE_NOISE = (-math.pi / 2, math.pi / 2)
SCALE_NOISE = (0.3, 2.2)


class GeometryError(ValueError):
    pass


class EmptyStrokeError(GeometryError):
    pass


class NonFiniteError(GeometryError):
    pass


@dataclass
class Stroke:
    """Ordered point sequence with pen states.

    points: (N, 2) float64 canvas coordinates.
    pen: (N,) int codes in {PEN_DOWN, PEN_LIFT, PEN_END}; at most one PEN_END
    and only at the final point.
    """

    points: np.ndarray
    pen: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise GeometryError(f"points must be (N, 2), got {self.points.shape}")
        if self.points.shape[0] < 1:
            raise EmptyStrokeError("stroke has no points")
        if not np.isfinite(self.points).all():
            raise NonFiniteError("stroke contains NaN/Inf coordinates")
        self.pen = np.asarray(self.pen, dtype=np.int64)
        if self.pen.shape != (self.points.shape[0],):
            raise GeometryError(
                f"pen states {self.pen.shape} do not match points {self.points.shape}"
            )
        ends = np.flatnonzero(self.pen == PEN_END)
        if ends.size > 1 or (ends.size == 1 and ends[0] != len(self.pen) - 1):
            raise GeometryError("PEN_END allowed only once, at the final point")

    def __len__(self):
        return self.points.shape[0]

    @staticmethod
    def from_points(points, end=False) -> "Stroke":
        """Polyline with down...down,lift pen states (or PEN_END on the last point)."""
        points = np.asarray(points, dtype=np.float64)
        pen = np.full(points.shape[0], PEN_DOWN, dtype=np.int64)
        pen[-1] = PEN_END if end else PEN_LIFT
        return Stroke(points, pen)


@dataclass
class Sketch:
    """Ordered collection of strokes."""

    strokes: list[Stroke]

    def __post_init__(self):
        if len(self.strokes) < 1:
            raise GeometryError("sketch needs at least one stroke")

    def __len__(self):
        return len(self.strokes)


@dataclass
class StrokeAttributes:
    """Editable pose of a stroke: [a, b, theta, log_tau1, log_tau2].

    (a, b) is the starting point, theta the start-to-center angle in radians
    ((-pi, pi] when extracted; derived values such as corrupted poses may lie
    outside that range), log_tau the log extents along / across the
    start-to-center direction.
    """

    a: float
    b: float
    theta: float
    log_tau: np.ndarray

    def __post_init__(self):
        self.log_tau = np.asarray(self.log_tau, dtype=np.float64).reshape(2)
        if not (
            math.isfinite(self.a)
            and math.isfinite(self.b)
            and math.isfinite(self.theta)
            and np.isfinite(self.log_tau).all()
        ):
            raise NonFiniteError("attributes contain NaN/Inf")

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.a, self.b, self.theta, self.log_tau[0], self.log_tau[1]],
            dtype=np.float64,
        )

    @staticmethod
    def from_vector(v) -> "StrokeAttributes":
        v = np.asarray(v, dtype=np.float64).reshape(5)
        return StrokeAttributes(float(v[0]), float(v[1]), float(v[2]), v[3:5].copy())

    def replace(self, **kw) -> "StrokeAttributes":
        vals = dict(a=self.a, b=self.b, theta=self.theta, log_tau=self.log_tau.copy())
        vals.update(kw)
        return StrokeAttributes(**vals)


@dataclass
class OffsetAttributes:
    """Directed relative pose p_i - p_j between two strokes (5-vector)."""

    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64).reshape(5)
        if not np.isfinite(self.delta).all():
            raise NonFiniteError("offset contains NaN/Inf")


@dataclass
class NormalizedStroke:
    """Stroke mapped to canonical pose, coordinates in [0,1]^2."""

    stroke: Stroke


def _rotate(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return points @ rot.T


def normalize_stroke(stroke: Stroke) -> tuple[NormalizedStroke, StrokeAttributes]:
    """Factor a stroke into (canonical shape, pose attributes).

    The pose anchor (a, b) is the first point; theta is the angle from it to
    the point mean; the stroke is rotated by -theta so that direction lands on
    the +x axis, then min-max scaled into [0,1]^2. tau holds the post-rotation
    extents, clamped to SCALE_EPS, so the factorization inverts exactly for
    non-degenerate strokes.
    """
    pts = stroke.points
    a, b = float(pts[0, 0]), float(pts[0, 1])
    center = pts.mean(axis=0)
    # atan2(0, 0) == 0 covers the center-at-start degenerate case
    theta = math.atan2(center[1] - b, center[0] - a)

    local = pts - pts[0]
    rotated = _rotate(local, -theta)

    lo = rotated.min(axis=0)
    hi = rotated.max(axis=0)
    tau = np.maximum(hi - lo, SCALE_EPS)
    norm_pts = (rotated - lo) / tau

    ns = NormalizedStroke(Stroke(norm_pts, stroke.pen.copy()))
    attrs = StrokeAttributes(a, b, theta, np.log(tau))
    return ns, attrs


def denormalize_stroke(ns: NormalizedStroke, attrs: StrokeAttributes) -> Stroke:
    """Inverse of normalize_stroke: re-pose a canonical stroke under attrs."""
    pts = ns.stroke.points
    if pts.shape[0] < 1:
        raise EmptyStrokeError("normalized stroke has no points")
    local = (pts - pts[0]) * np.exp(attrs.log_tau)
    rotated = _rotate(local, attrs.theta)
    return Stroke(rotated + np.array([attrs.a, attrs.b]), ns.stroke.pen.copy())


def offset_between(p_i: StrokeAttributes, p_j: StrokeAttributes) -> OffsetAttributes:
    """Directed pose offset from stroke j to stroke i: elementwise p_i - p_j.

    Angles are subtracted raw (no 2*pi wrapping); the scale components equal
    the log size ratio log(tau_i / tau_j).
    """
    return OffsetAttributes(p_i.as_vector() - p_j.as_vector())


def corrupt_attributes(attrs: StrokeAttributes, rng: np.random.Generator) -> StrokeAttributes:
    """Apply bounded pose noise: uniform position/angle offsets, uniform scale factors.

    Deterministic for a given rng state; draws exactly five uniforms in a
    fixed order (a, b, theta, tau1, tau2).
    """
    eps_a = rng.uniform(*POS_NOISE)
    eps_b = rng.uniform(*POS_NOISE)
    eps_theta = rng.uniform(*ANGLE_NOISE)
    eps_tau = np.array([rng.uniform(*SCALE_NOISE), rng.uniform(*SCALE_NOISE)])
    return StrokeAttributes(
        attrs.a + eps_a,
        attrs.b + eps_b,
        attrs.theta + eps_theta,
        attrs.log_tau + np.log(eps_tau),
    )


def resample_stroke(stroke: Stroke, n_points: int) -> Stroke:
    """Arc-length-uniform resampling to exactly n_points.

    First and last original points are preserved; pen states become
    down,...,down,lift (PEN_END is retained if the source ended the sketch).
    Degenerate strokes (single point or zero length) produce n copies.
    """
    if n_points < 2:
        raise GeometryError(f"n_points must be >= 2, got {n_points}")
    pts = stroke.points
    last_pen = PEN_END if stroke.pen[-1] == PEN_END else PEN_LIFT

    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1) if len(pts) > 1 else np.zeros(0)
    total = float(seg.sum())
    if len(pts) < 2 or total <= 0.0:
        out = np.repeat(pts[:1], n_points, axis=0)
    else:
        # drop zero-length segments so the arc parameter is strictly increasing
        keep = np.concatenate([[True], seg > 0.0])
        kept = pts[keep]
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(kept, axis=0), axis=1))])
        s = np.linspace(0.0, cum[-1], n_points)
        out = np.column_stack(
            [np.interp(s, cum, kept[:, 0]), np.interp(s, cum, kept[:, 1])]
        )
        out[0] = pts[0]
        out[-1] = pts[-1]

    pen = np.full(n_points, PEN_DOWN, dtype=np.int64)
    pen[-1] = last_pen
    return Stroke(out, pen)


def apply_attributes(stroke: Stroke, new_attrs: StrokeAttributes) -> Stroke:
    """Re-pose a stroke under new attributes, keeping its canonical shape."""
    ns, _ = normalize_stroke(stroke)
    return denormalize_stroke(ns, new_attrs)


def stroke_length(stroke: Stroke) -> float:
    if len(stroke) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(stroke.points, axis=0), axis=1).sum())


def fit_canvas(sketch: Sketch, margin: float = 0.05) -> Sketch:
    """Uniformly scale and center a sketch to fit [-1, 1]^2 (aspect preserved)."""
    all_pts = np.concatenate([s.points for s in sketch.strokes], axis=0)
    lo = all_pts.min(axis=0)
    hi = all_pts.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], SCALE_EPS))
    scale = 2.0 * (1.0 - margin) / span
    center = (lo + hi) / 2.0
    return Sketch(
        [Stroke((s.points - center) * scale, s.pen.copy()) for s in sketch.strokes]
    )
