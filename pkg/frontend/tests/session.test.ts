import { describe, expect, it } from "vitest";
import { Session } from "../src/session.js";
import { deepCopy, editResult, sampleSketch } from "./helpers.js";

function loaded(): Session {
  const session = new Session();
  session.loadSketch(sampleSketch());
  return session;
}

describe("Session", () => {
  it("rejects overrides that do not reference an existing stroke", () => {
    const session = loaded();
    expect(() => session.setOverride(2, { a: 0 })).toThrow(RangeError);
    expect(() => session.setOverride(-1, { a: 0 })).toThrow(RangeError);
    session.setOverride(1, { theta: 0.5 });
    expect(session.pendingOverrides[1]).toEqual({ theta: 0.5 });
  });

  it("merges successive overrides for the same stroke", () => {
    const session = loaded();
    session.setOverride(0, { a: 1 });
    session.setOverride(0, { theta: 2 });
    session.setOverride(0, { a: 3 });
    expect(session.pendingOverrides[0]).toEqual({ a: 3, theta: 2 });
  });

  it("rejects selecting a missing stroke", () => {
    const session = loaded();
    expect(() => session.select(5)).toThrow(RangeError);
    session.select(1);
    expect(session.selected).toBe(1);
    session.select(null);
    expect(session.selected).toBeNull();
  });

  it("applyResult pushes the prior sketch and consumes overrides", () => {
    const session = loaded();
    const before = deepCopy(session.sketch);
    session.setOverride(0, { a: 1 });
    const result = editResult({ strokes: [{ points: [[9, 9]], pen: [2] }] });
    session.applyResult(result);
    expect(session.sketch).toEqual(result.edited);
    expect(session.pendingOverrides).toEqual({});
    expect(session.history.depth).toBe(1);
    expect(session.undo()).toBe(true);
    expect(session.sketch).toEqual(before);
  });

  it("undo restores the exact prior sketch JSON", () => {
    const session = loaded();
    const beforeJson = JSON.stringify(session.sketch);
    session.applyResult(editResult({ strokes: [{ points: [[1, 2]], pen: [2] }] }));
    session.applyResult(editResult({ strokes: [{ points: [[3, 4]], pen: [2] }] }));
    session.undo();
    session.undo();
    expect(JSON.stringify(session.sketch)).toBe(beforeJson);
    expect(session.undo()).toBe(false);
  });

  it("clamps the selection when an edit shrinks the sketch", () => {
    const session = loaded();
    session.select(1);
    session.applyResult(editResult({ strokes: [{ points: [[0, 0]], pen: [2] }] }));
    expect(session.selected).toBe(0);
  });

  it("loadSketch resets selection, overrides, and history", () => {
    const session = loaded();
    session.select(0);
    session.setOverride(0, { a: 1 });
    session.applyResult(editResult(sampleSketch()));
    session.loadSketch(sampleSketch());
    expect(session.selected).toBeNull();
    expect(session.pendingOverrides).toEqual({});
    expect(session.history.depth).toBe(0);
  });
});
