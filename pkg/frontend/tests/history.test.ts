import { describe, expect, it } from "vitest";
import { History } from "../src/history.js";
import type { Sketch } from "../src/types.js";
import { deepCopy, sampleSketch } from "./helpers.js";

describe("History", () => {
  it("undo returns a deep-equal copy, not the pushed reference", () => {
    const history = new History();
    const sketch = sampleSketch();
    history.push(sketch);
    const restored = history.undo();
    expect(restored).not.toBe(sketch);
    expect(restored).toEqual(sketch);
  });

  it("entries are immune to mutation after push", () => {
    const history = new History();
    const sketch = sampleSketch();
    const snapshot = deepCopy(sketch);
    history.push(sketch);
    sketch.strokes[0]!.points[0]![0] = 999;
    sketch.strokes.pop();
    expect(history.undo()).toEqual(snapshot);
  });

  it("is bounded: overflowing drops the oldest entry", () => {
    const history = new History(2);
    const make = (x: number): Sketch => ({ strokes: [{ points: [[x, 0]], pen: [2] }] });
    history.push(make(1));
    history.push(make(2));
    history.push(make(3));
    expect(history.depth).toBe(2);
    expect(history.undo()).toEqual(make(3));
    expect(history.undo()).toEqual(make(2));
    expect(history.undo()).toBeNull();
  });

  it("defaults to a depth bound of 50", () => {
    const history = new History();
    for (let i = 0; i < 60; i++) {
      history.push({ strokes: [{ points: [[i, 0]], pen: [2] }] });
    }
    expect(history.depth).toBe(50);
  });

  it("rejects a non-positive limit", () => {
    expect(() => new History(0)).toThrow(RangeError);
  });
});
