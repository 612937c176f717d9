import type { Sketch } from "./types.js";

/** Bounded undo stack. Entries are stored serialized so undo returns the
 * exact prior sketch JSON regardless of later mutation of live objects. */
export class History {
  private stack: string[] = [];

  constructor(readonly limit = 50) {
    if (limit < 1) throw new RangeError("history limit must be >= 1");
  }

  get depth(): number {
    return this.stack.length;
  }

  push(sketch: Sketch): void {
    this.stack.push(JSON.stringify(sketch));
    if (this.stack.length > this.limit) this.stack.shift();
  }

  undo(): Sketch | null {
    const serialized = this.stack.pop();
    return serialized === undefined ? null : (JSON.parse(serialized) as Sketch);
  }

  clear(): void {
    this.stack = [];
  }
}
