import { EditClient, SupersededError } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import { applyAttributes, normalizeStroke } from "./geometry.js";
import { Session } from "./session.js";
import type { Attributes, AttributeKey, EditResult, Stroke } from "./types.js";
import { ATTRIBUTE_KEYS } from "./types.js";

export interface PanelOptions {
  debounceMs?: number;
  onResult?: (result: EditResult) => void;
  onError?: (err: unknown) => void;
  /** Local geometry-only preview of the stroke being dragged. */
  onPreview?: (index: number, stroke: Stroke) => void;
}

const SLIDER_STEP = 1e-4;

function wrapAngle(theta: number): number {
  // into (-pi, pi]
  let t = theta % (2 * Math.PI);
  if (t <= -Math.PI) t += 2 * Math.PI;
  if (t > Math.PI) t -= 2 * Math.PI;
  return t;
}

/** Sliders bound to the selected stroke's pose attributes. Position sliders
 * move in sketch units, the angle slider spans (-pi, pi], and the two scale
 * sliders move in log space so equal drags multiply scale equally. Edits
 * preview locally during the drag and commit one debounced manipulate request;
 * a slider parked at the stroke's stored value issues nothing. */
export class AttributePanel {
  readonly sliders = new Map<AttributeKey, HTMLInputElement>();
  readonly rotateButton: HTMLButtonElement;
  private base: Attributes | null = null;
  private index: number | null = null;
  private readonly commitDebounced: Debounced<[]>;

  constructor(
    readonly root: HTMLElement,
    readonly session: Session,
    readonly client: EditClient,
    readonly opts: PanelOptions = {},
  ) {
    this.commitDebounced = debounce(() => void this.commit(), opts.debounceMs ?? 250);
    const doc = root.ownerDocument;
    for (const key of ATTRIBUTE_KEYS) {
      const row = doc.createElement("label");
      row.textContent = key;
      const slider = doc.createElement("input");
      slider.type = "range";
      slider.name = key;
      slider.step = String(SLIDER_STEP);
      slider.disabled = true;
      slider.addEventListener("input", () => this.onSlider(key));
      row.appendChild(slider);
      root.appendChild(row);
      this.sliders.set(key, slider);
    }
    this.rotateButton = doc.createElement("button");
    this.rotateButton.textContent = "θ +90°";
    this.rotateButton.disabled = true;
    this.rotateButton.addEventListener("click", () => this.rotate90());
    root.appendChild(this.rotateButton);
  }

  /** Bind the panel to a stroke; slider ranges center on its stored pose. */
  showStroke(index: number | null): void {
    this.commitDebounced.cancel();
    this.index = index;
    if (index === null) {
      this.base = null;
      for (const slider of this.sliders.values()) slider.disabled = true;
      this.rotateButton.disabled = true;
      return;
    }
    const stroke = this.session.sketch.strokes[index];
    if (stroke === undefined) throw new RangeError(`stroke index ${index} out of range`);
    this.base = normalizeStroke(stroke).attributes;
    const ranges: Record<AttributeKey, [number, number]> = {
      a: [this.base.a - 1, this.base.a + 1],
      b: [this.base.b - 1, this.base.b + 1],
      theta: [-Math.PI + SLIDER_STEP, Math.PI],
      log_tau1: [this.base.log_tau1 - Math.log(4), this.base.log_tau1 + Math.log(4)],
      log_tau2: [this.base.log_tau2 - Math.log(4), this.base.log_tau2 + Math.log(4)],
    };
    for (const key of ATTRIBUTE_KEYS) {
      const slider = this.sliders.get(key)!;
      const [lo, hi] = ranges[key];
      slider.min = String(lo);
      slider.max = String(hi);
      slider.value = String(key === "theta" ? wrapAngle(this.base[key]) : this.base[key]);
      slider.disabled = false;
    }
    this.rotateButton.disabled = false;
  }

  private onSlider(key: AttributeKey): void {
    if (this.index === null || this.base === null) return;
    const slider = this.sliders.get(key)!;
    const value = Number(slider.value);
    const stored = key === "theta" ? wrapAngle(this.base[key]) : this.base[key];
    if (value === stored) {
      // no-op guard: back at the stored pose, drop the pending override
      const pending = this.session.pendingOverrides[this.index];
      if (pending) {
        delete pending[key];
        if (Object.keys(pending).length === 0) delete this.session.pendingOverrides[this.index];
      }
      if (!this.hasPending()) this.commitDebounced.cancel();
      this.preview();
      return;
    }
    this.session.setOverride(this.index, { [key]: value });
    this.preview();
    this.commitDebounced();
  }

  private rotate90(): void {
    if (this.index === null || this.base === null) return;
    const pending = this.session.pendingOverrides[this.index];
    const current = pending?.theta ?? this.base.theta;
    const theta = (current as number) + Math.PI / 2;
    this.session.setOverride(this.index, { theta });
    const slider = this.sliders.get("theta")!;
    slider.value = String(wrapAngle(theta));
    this.preview();
    this.commitDebounced();
  }

  private hasPending(): boolean {
    return this.index !== null && this.session.pendingOverrides[this.index] !== undefined;
  }

  private preview(): void {
    if (this.index === null || !this.opts.onPreview) return;
    const stroke = this.session.sketch.strokes[this.index];
    if (stroke === undefined) return;
    const override = this.session.pendingOverrides[this.index] ?? {};
    this.opts.onPreview(this.index, applyAttributes(stroke, override));
  }

  /** Send the pending overrides as one manipulate request. */
  async commit(): Promise<void> {
    if (this.index === null || !this.hasPending()) return;
    const index = this.index;
    const overrides = { [String(index)]: { ...this.session.pendingOverrides[index] } };
    try {
      const result = await this.client.edit({
        mode: "manipulate",
        target: this.session.sketch,
        attribute_overrides: overrides,
      });
      this.session.applyResult(result);
      this.opts.onResult?.(result);
      if (this.session.selected !== null) this.showStroke(this.session.selected);
    } catch (err) {
      if (err instanceof SupersededError) return;
      this.opts.onError?.(err);
    }
  }
}
