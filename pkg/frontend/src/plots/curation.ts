/**
 * Curation curve from a quality table: per-image quality sorted descending
 * against rank, with octile boundaries marked.
 */
import { Element, el, renderSvg, fmt, text } from "../svg.js";
import { QualityRow } from "../schemas.js";

const W = 420;
const H = 260;
const PAD_L = 56;
const PAD_T = 20;
const PAD_B = 36;

export function renderCuration(rows: QualityRow[]): string {
  const plotW = W - PAD_L - 16;
  const plotH = H - PAD_T - PAD_B;
  const qs = rows.map((r) => r.Q).sort((a, b) => b - a);
  const lo = Math.min(...qs);
  const hi = Math.max(...qs);
  const span = hi > lo ? hi - lo : 1;
  const pts = qs.map((q, i) => {
    const x = PAD_L + (qs.length === 1 ? 0.5 : i / (qs.length - 1)) * plotW;
    const y = PAD_T + (1 - (q - lo) / span) * plotH;
    return `${fmt(x)},${fmt(y)}`;
  });

  const children: Element[] = [
    el("rect", {
      x: PAD_L, y: PAD_T, width: plotW, height: plotH,
      fill: "none", stroke: "#222", "stroke-width": 1,
    }),
    el("polyline", {
      points: pts.join(" "), fill: "none",
      stroke: "#3566a8", "stroke-width": 1.5,
    }),
  ];
  for (let k = 1; k < 8; k++) {
    const x = PAD_L + (k / 8) * plotW;
    children.push(el("line", {
      x1: x, y1: PAD_T, x2: x, y2: PAD_T + plotH,
      stroke: "#bbb", "stroke-width": 0.75, "stroke-dasharray": "3,3",
    }));
  }
  children.push(text(PAD_L + plotW / 2, H - 10, "quality rank"));
  children.push(text(16, PAD_T + plotH / 2, "Q"));
  children.push(text(PAD_L - 16, PAD_T + 4, hi.toPrecision(3), "end", 10));
  children.push(text(PAD_L - 16, PAD_T + plotH + 4, lo.toPrecision(3),
                     "end", 10));
  return renderSvg(W, H, children);
}
