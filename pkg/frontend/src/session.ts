import { History } from "./history.js";
import type { AttributeOverride, EditResult, Sketch, Stroke } from "./types.js";

/** Editor state: the current sketch, selection, pending per-stroke attribute
 * overrides, a palette of source strokes, and a bounded undo history. The
 * sketch is only ever replaced wholesale (load, service result, undo); nothing
 * here mutates stroke geometry in place. */
export class Session {
  sketch: Sketch = { strokes: [] };
  selected: number | null = null;
  pendingOverrides: Record<number, AttributeOverride> = {};
  palette: Stroke[] = [];
  readonly history = new History(50);

  loadSketch(sketch: Sketch): void {
    this.sketch = sketch;
    this.selected = null;
    this.pendingOverrides = {};
    this.history.clear();
  }

  select(index: number | null): void {
    if (index !== null && (index < 0 || index >= this.sketch.strokes.length)) {
      throw new RangeError(`stroke index ${index} out of range`);
    }
    this.selected = index;
  }

  /** Record a pending override. Overrides must reference an existing stroke. */
  setOverride(index: number, override: AttributeOverride): void {
    if (index < 0 || index >= this.sketch.strokes.length) {
      throw new RangeError(`override references missing stroke ${index}`);
    }
    this.pendingOverrides[index] = { ...this.pendingOverrides[index], ...override };
  }

  clearOverrides(): void {
    this.pendingOverrides = {};
  }

  /** Adopt a service edit result: the prior sketch goes onto the undo stack
   * and pending overrides are consumed. */
  applyResult(result: EditResult): void {
    this.history.push(this.sketch);
    this.sketch = result.edited;
    this.pendingOverrides = {};
    if (this.selected !== null && this.selected >= this.sketch.strokes.length) {
      this.selected = this.sketch.strokes.length > 0 ? this.sketch.strokes.length - 1 : null;
    }
  }

  /** Restore the previous sketch exactly as it was. Returns false when the
   * history is empty. */
  undo(): boolean {
    const prior = this.history.undo();
    if (prior === null) return false;
    this.sketch = prior;
    this.pendingOverrides = {};
    if (this.selected !== null && this.selected >= this.sketch.strokes.length) {
      this.selected = this.sketch.strokes.length > 0 ? this.sketch.strokes.length - 1 : null;
    }
    return true;
  }

  addToPalette(stroke: Stroke): void {
    this.palette.push(stroke);
  }
}
