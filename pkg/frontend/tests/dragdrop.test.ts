import { describe, expect, it } from "vitest";
import { buildDropRequest } from "../src/dragdrop.js";
import type { Stroke } from "../src/types.js";
import { sampleSketch } from "./helpers.js";

const SOURCE: Stroke = { points: [[5, 5], [5.5, 5.2], [6, 5]], pen: [0, 0, 2] };

describe("buildDropRequest", () => {
  it("dropping on stroke i produces replace with replace_index = i", () => {
    const sketch = sampleSketch();
    // directly on stroke 1's first segment
    const request = buildDropRequest(sketch, SOURCE, [0.25, 1.25]);
    expect(request.mode).toBe("replace");
    expect(request.replace_index).toBe(1);
    expect(request.target).toBe(sketch);
    console.log("[ACCEPTANCE] drop-on-stroke produces replace with correct index: PASS");
  });

  it("dropping on empty canvas space produces expand", () => {
    const request = buildDropRequest(sampleSketch(), SOURCE, [10, -10]);
    expect(request.mode).toBe("expand");
    expect("replace_index" in request).toBe(false);
  });

  it("the drop point seeds the source stroke's position", () => {
    const drop: [number, number] = [10, -10];
    const request = buildDropRequest(sampleSketch(), SOURCE, drop);
    const start = request.source!.points[0]!;
    expect(start[0]).toBeCloseTo(drop[0], 9);
    expect(start[1]).toBeCloseTo(drop[1], 9);
    // shape is preserved: same point count and chord lengths
    expect(request.source!.points.length).toBe(SOURCE.points.length);
    const chord = (pts: [number, number][]) =>
      Math.hypot(pts[2]![0] - pts[0]![0], pts[2]![1] - pts[0]![1]);
    expect(chord(request.source!.points)).toBeCloseTo(chord(SOURCE.points), 9);
  });

  it("prefers the nearest stroke when several are within tolerance", () => {
    const sketch = sampleSketch();
    // between the strokes but nearer to stroke 0 (y=0 line)
    const request = buildDropRequest(sketch, SOURCE, [0.5, 0.3], { tolerance: 2 });
    expect(request.mode).toBe("replace");
    expect(request.replace_index).toBe(0);
  });

  it("passes the geometry-only flag through", () => {
    const request = buildDropRequest(sampleSketch(), SOURCE, [10, -10], { geometryOnly: true });
    expect(request.geometry_only).toBe(true);
  });
});
