import { sketchBounds } from "./geometry.js";
import type { Sketch, Stroke } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function strokePath(stroke: Stroke): string {
  const parts: string[] = [];
  for (let i = 0; i < stroke.points.length; i++) {
    const p = stroke.points[i]!;
    parts.push(`${i === 0 ? "M" : "L"} ${p[0]} ${p[1]}`);
  }
  return parts.join(" ");
}

/** Render one <path> per stroke into an <svg> element. The selected stroke is
 * tinted and marked; clicking a path selects its stroke. An empty sketch
 * renders an empty canvas. */
export function renderCanvas(
  svg: SVGSVGElement,
  sketch: Sketch,
  selected: number | null,
  onSelect?: (index: number) => void,
): void {
  while (svg.firstChild) svg.removeChild(svg.firstChild);

  const bounds = sketchBounds(sketch);
  if (bounds !== null) {
    const w = Math.max(bounds.maxX - bounds.minX, 1e-6);
    const h = Math.max(bounds.maxY - bounds.minY, 1e-6);
    const pad = 0.05 * Math.max(w, h);
    svg.setAttribute(
      "viewBox",
      `${bounds.minX - pad} ${bounds.minY - pad} ${w + 2 * pad} ${h + 2 * pad}`,
    );
  }

  sketch.strokes.forEach((stroke, index) => {
    const path = svg.ownerDocument.createElementNS(SVG_NS, "path");
    path.setAttribute("d", strokePath(stroke));
    path.setAttribute("fill", "none");
    path.setAttribute("data-index", String(index));
    if (index === selected) {
      path.setAttribute("class", "stroke selected");
      path.setAttribute("stroke", "#d9480f");
    } else {
      path.setAttribute("class", "stroke");
      path.setAttribute("stroke", "#222");
    }
    path.setAttribute("stroke-width", "0.012");
    if (onSelect) path.addEventListener("click", () => onSelect(index));
    svg.appendChild(path);
  });
}

/** Display the service-rendered SVG verbatim (no client-side rewriting). */
export function showServiceSvg(container: HTMLElement, svg: string): void {
  container.innerHTML = svg;
}
