/** Wire types mirroring the service's committed JSON schemas. */

export type Point = [number, number];

export const PEN_DOWN = 0;
export const PEN_LIFT = 1;
export const PEN_END = 2;

export interface Stroke {
  points: Point[];
  pen: number[];
}

export interface Sketch {
  version?: number;
  strokes: Stroke[];
}

/** Pose of one stroke: start point, start->centroid direction, log extents. */
export interface Attributes {
  a: number;
  b: number;
  theta: number;
  log_tau1: number;
  log_tau2: number;
}

export type AttributeKey = keyof Attributes;

export const ATTRIBUTE_KEYS: readonly AttributeKey[] = [
  "a",
  "b",
  "theta",
  "log_tau1",
  "log_tau2",
];

/** Partial pose override; absent/null fields keep the stroke's own value. */
export type AttributeOverride = Partial<Record<AttributeKey, number | null>>;

export type EditMode = "expand" | "replace" | "manipulate" | "reconstruct";

export interface EditRequest {
  mode: EditMode;
  target: Sketch;
  source?: Stroke;
  replace_index?: number;
  attribute_overrides?: Record<string, AttributeOverride>;
  decode_temperature?: number;
  seed?: number;
  geometry_only?: boolean;
}

export interface EditResult {
  mode: EditMode;
  edited: Sketch;
  svg: string;
  raster_b64: string;
  image_size: number;
  raster_format?: string;
  refined_attributes?: Attributes | null;
  source_index?: number | null;
}

export interface NormalizeResult {
  attributes: Attributes;
  normalized: Stroke;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  config_hash: string;
  params_hash: string;
  n_parameters: number;
}
