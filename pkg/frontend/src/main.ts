import { EditClient } from "./api.js";
import { renderCanvas, showServiceSvg } from "./canvas.js";
import { buildDropRequest } from "./dragdrop.js";
import { AttributePanel } from "./panel.js";
import { Session } from "./session.js";
import type { EditResult, Point, Sketch } from "./types.js";

function must<T extends Element>(el: T | null, what: string): T {
  if (el === null) throw new Error(`missing element: ${what}`);
  return el;
}

export function startEditor(doc: Document, baseUrl = ""): void {
  const canvas = must(doc.querySelector<SVGSVGElement>("#canvas"), "#canvas");
  const serviceView = must(doc.querySelector<HTMLElement>("#service-svg"), "#service-svg");
  const panelRoot = must(doc.querySelector<HTMLElement>("#panel"), "#panel");
  const paletteEl = must(doc.querySelector<HTMLElement>("#palette"), "#palette");
  const statusEl = must(doc.querySelector<HTMLElement>("#status"), "#status");
  const fileInput = must(doc.querySelector<HTMLInputElement>("#load"), "#load");
  const undoButton = must(doc.querySelector<HTMLButtonElement>("#undo"), "#undo");
  const downloadLink = must(doc.querySelector<HTMLAnchorElement>("#download"), "#download");
  const exportLink = must(doc.querySelector<HTMLAnchorElement>("#export"), "#export");

  const session = new Session();
  const client = new EditClient(baseUrl);
  let lastSvg = "";

  const setStatus = (text: string, isError = false): void => {
    statusEl.textContent = text;
    statusEl.classList.toggle("error", isError);
  };

  const redraw = (): void => {
    renderCanvas(canvas, session.sketch, session.selected, (index) => {
      session.select(index);
      panel.showStroke(index);
      redraw();
    });
    exportLink.href = "data:application/json," + encodeURIComponent(JSON.stringify(session.sketch));
  };

  const adopt = (result: EditResult): void => {
    lastSvg = result.svg;
    showServiceSvg(serviceView, result.svg);
    downloadLink.href = "data:image/svg+xml," + encodeURIComponent(result.svg);
    redraw();
    setStatus(`edit ok (${result.mode})`);
  };

  const panel = new AttributePanel(panelRoot, session, client, {
    onResult: adopt,
    onError: (err) => setStatus(`edit failed: ${String(err)}`, true),
    onPreview: (index, stroke) => {
      const preview: Sketch = {
        ...session.sketch,
        strokes: session.sketch.strokes.map((s, i) => (i === index ? stroke : s)),
      };
      renderCanvas(canvas, preview, session.selected);
    },
  });

  const renderPalette = (): void => {
    paletteEl.textContent = "";
    session.palette.forEach((stroke, i) => {
      const chip = doc.createElement("button");
      chip.textContent = `stroke ${i} (${stroke.points.length} pts)`;
      chip.draggable = true;
      chip.addEventListener("dragstart", (ev) => {
        ev.dataTransfer?.setData("application/x-stroke-index", String(i));
      });
      paletteEl.appendChild(chip);
    });
  };

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    void file.text().then((text) => {
      try {
        const sketch = JSON.parse(text) as Sketch;
        session.loadSketch(sketch);
        for (const stroke of sketch.strokes) session.addToPalette(stroke);
        panel.showStroke(null);
        renderPalette();
        redraw();
        setStatus(`loaded ${sketch.strokes.length} strokes`);
      } catch (err) {
        setStatus(`load failed: ${String(err)}`, true);
      }
    });
  });

  undoButton.addEventListener("click", () => {
    if (!session.undo()) {
      setStatus("nothing to undo");
      return;
    }
    panel.showStroke(session.selected);
    redraw();
    if (lastSvg) showServiceSvg(serviceView, lastSvg);
    setStatus("undid last edit");
  });

  const canvasPoint = (ev: DragEvent): Point => {
    const rect = canvas.getBoundingClientRect();
    const view = canvas.viewBox.baseVal;
    const x = view.x + ((ev.clientX - rect.left) / rect.width) * view.width;
    const y = view.y + ((ev.clientY - rect.top) / rect.height) * view.height;
    return [x, y];
  };

  canvas.addEventListener("dragover", (ev) => ev.preventDefault());
  canvas.addEventListener("drop", (ev) => {
    ev.preventDefault();
    const raw = ev.dataTransfer?.getData("application/x-stroke-index");
    if (!raw) return;
    const source = session.palette[Number(raw)];
    if (!source) return;
    const request = buildDropRequest(session.sketch, source, canvasPoint(ev));
    setStatus(`sending ${request.mode}…`);
    client
      .edit(request)
      .then((result) => {
        session.applyResult(result);
        adopt(result);
      })
      .catch((err) => setStatus(`edit failed: ${String(err)}`, true));
  });

  redraw();
  setStatus("load a sketch JSON to begin");
}
