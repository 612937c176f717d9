import { hitTest, applyAttributes } from "./geometry.js";
import type { EditRequest, Point, Sketch, Stroke } from "./types.js";

export interface DropOptions {
  /** Hit-test tolerance in sketch units. */
  tolerance?: number;
  geometryOnly?: boolean;
}

/** Translate a palette-stroke drop into an edit request. Dropping on an
 * existing stroke replaces it at that index; dropping on empty canvas expands
 * the sketch. The source is re-posed locally so its anchor sits at the drop
 * point — that pose seeds the model, whose refined placement is what the user
 * then sees. */
export function buildDropRequest(
  sketch: Sketch,
  source: Stroke,
  dropPoint: Point,
  opts: DropOptions = {},
): EditRequest {
  const index = hitTest(sketch, dropPoint, opts.tolerance ?? 0.05);
  const seeded = applyAttributes(source, { a: dropPoint[0], b: dropPoint[1] });
  const request: EditRequest = {
    mode: index === null ? "expand" : "replace",
    target: sketch,
    source: seeded,
  };
  if (index !== null) request.replace_index = index;
  if (opts.geometryOnly) request.geometry_only = true;
  return request;
}
