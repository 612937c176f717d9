/** Client-side pose math, mirroring the service's stroke factorization so the
 * slider preview re-poses strokes with the same semantics the model uses. */

import type { Attributes, AttributeOverride, Point, Sketch, Stroke } from "./types.js";

export const SCALE_EPS = 1e-6;

export interface NormalizedStroke {
  attributes: Attributes;
  /** Canonical shape: translated to the origin, rotated so the
   * start->centroid direction lies on +x, min-max scaled into [0,1]^2. */
  points: Point[];
}

export function normalizeStroke(stroke: Stroke): NormalizedStroke {
  const pts = stroke.points;
  if (pts.length === 0) throw new RangeError("stroke has no points");
  const [a, b] = pts[0]!;
  let cx = 0;
  let cy = 0;
  for (const [x, y] of pts) {
    cx += x;
    cy += y;
  }
  cx /= pts.length;
  cy /= pts.length;
  const theta = Math.atan2(cy - b, cx - a);

  const cos = Math.cos(-theta);
  const sin = Math.sin(-theta);
  const rotated: Point[] = pts.map(([x, y]) => {
    const lx = x - a;
    const ly = y - b;
    return [lx * cos - ly * sin, lx * sin + ly * cos];
  });
  let loX = Infinity;
  let loY = Infinity;
  let hiX = -Infinity;
  let hiY = -Infinity;
  for (const [x, y] of rotated) {
    loX = Math.min(loX, x);
    loY = Math.min(loY, y);
    hiX = Math.max(hiX, x);
    hiY = Math.max(hiY, y);
  }
  const tauX = Math.max(hiX - loX, SCALE_EPS);
  const tauY = Math.max(hiY - loY, SCALE_EPS);
  return {
    attributes: {
      a,
      b,
      theta,
      log_tau1: Math.log(tauX),
      log_tau2: Math.log(tauY),
    },
    points: rotated.map(([x, y]) => [(x - loX) / tauX, (y - loY) / tauY]),
  };
}

export function denormalizeStroke(
  normalized: Point[],
  pen: number[],
  attrs: Attributes,
): Stroke {
  if (normalized.length === 0) throw new RangeError("normalized stroke has no points");
  const [ox, oy] = normalized[0]!;
  const tauX = Math.exp(attrs.log_tau1);
  const tauY = Math.exp(attrs.log_tau2);
  const cos = Math.cos(attrs.theta);
  const sin = Math.sin(attrs.theta);
  const points: Point[] = normalized.map(([x, y]) => {
    const lx = (x - ox) * tauX;
    const ly = (y - oy) * tauY;
    return [lx * cos - ly * sin + attrs.a, lx * sin + ly * cos + attrs.b];
  });
  return { points, pen: [...pen] };
}

/** Re-pose a stroke under a partial pose override (the geometry-only preview:
 * factor out the pose, replace the given fields, re-pose). */
export function applyAttributes(stroke: Stroke, override: AttributeOverride): Stroke {
  const { attributes, points } = normalizeStroke(stroke);
  const merged: Attributes = { ...attributes };
  for (const key of Object.keys(override) as (keyof Attributes)[]) {
    const value = override[key];
    if (value !== null && value !== undefined) merged[key] = value;
  }
  return denormalizeStroke(points, stroke.pen, merged);
}

function pointSegmentDistance(p: Point, s0: Point, s1: Point): number {
  const dx = s1[0] - s0[0];
  const dy = s1[1] - s0[1];
  const len2 = dx * dx + dy * dy;
  let t = 0;
  if (len2 > 0) {
    t = ((p[0] - s0[0]) * dx + (p[1] - s0[1]) * dy) / len2;
    t = Math.max(0, Math.min(1, t));
  }
  const px = s0[0] + t * dx;
  const py = s0[1] + t * dy;
  return Math.hypot(p[0] - px, p[1] - py);
}

export function strokeDistance(stroke: Stroke, p: Point): number {
  const pts = stroke.points;
  if (pts.length === 1) return Math.hypot(p[0] - pts[0]![0], p[1] - pts[0]![1]);
  let best = Infinity;
  for (let i = 0; i + 1 < pts.length; i++) {
    best = Math.min(best, pointSegmentDistance(p, pts[i]!, pts[i + 1]!));
  }
  return best;
}

/** Index of the stroke nearest to `p` within `tolerance`, or null. */
export function hitTest(sketch: Sketch, p: Point, tolerance: number): number | null {
  let bestIndex: number | null = null;
  let best = tolerance;
  sketch.strokes.forEach((stroke, i) => {
    const d = strokeDistance(stroke, p);
    if (d <= best) {
      best = d;
      bestIndex = i;
    }
  });
  return bestIndex;
}

export interface Bounds {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export function sketchBounds(sketch: Sketch): Bounds | null {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const stroke of sketch.strokes) {
    for (const [x, y] of stroke.points) {
      minX = Math.min(minX, x);
      minY = Math.min(minY, y);
      maxX = Math.max(maxX, x);
      maxY = Math.max(maxY, y);
    }
  }
  return Number.isFinite(minX) ? { minX, minY, maxX, maxY } : null;
}
