/**
 * Median-error heatmap from a toy-sweep table: one panel per strategy,
 * x = second sweep axis, y = noise level, cell color = median error over
 * trials (log scale across the whole table).
 */
import { median } from "../csv.js";
import { Element, el, fmt, renderSvg, sequentialColor, text } from "../svg.js";
import { SweepRow } from "../schemas.js";

const CELL = 44;
const PAD_L = 70;
const PAD_T = 40;
const PAD_B = 34;
const PANEL_GAP = 28;

function uniqSorted(xs: number[]): number[] {
  return [...new Set(xs)].sort((a, b) => a - b);
}

export function renderHeatmap(rows: SweepRow[]): string {
  const strategies = [...new Set(rows.map((r) => r.strategy))].sort();
  const ys = uniqSorted(rows.map((r) => r.sigma_true));
  const xs = uniqSorted(rows.map((r) => r.sigma_est_or_lambda_or_beta));

  const meds = new Map<string, number>();
  for (const s of strategies) {
    for (const y of ys) {
      for (const x of xs) {
        const sel = rows.filter(
          (r) => r.strategy === s && r.sigma_true === y
            && r.sigma_est_or_lambda_or_beta === x,
        );
        if (sel.length > 0) {
          meds.set(`${s}|${y}|${x}`, median(sel.map((r) => r.error)));
        }
      }
    }
  }
  const vals = [...meds.values()].filter((v) => v > 0);
  const lo = Math.log10(Math.min(...vals, 1e-12));
  const hi = Math.log10(Math.max(...vals, 1e-12));
  const span = hi > lo ? hi - lo : 1;

  const panelW = xs.length * CELL;
  const panelH = ys.length * CELL;
  const width = PAD_L + strategies.length * (panelW + PANEL_GAP);
  const height = PAD_T + panelH + PAD_B;
  const children: Element[] = [];

  strategies.forEach((s, p) => {
    const x0 = PAD_L + p * (panelW + PANEL_GAP);
    children.push(text(x0 + panelW / 2, PAD_T - 12, s));
    ys.forEach((y, i) => {
      xs.forEach((x, j) => {
        const v = meds.get(`${s}|${y}|${x}`);
        const fill = v === undefined
          ? "#ddd"
          : sequentialColor((Math.log10(Math.max(v, 1e-12)) - lo) / span);
        children.push(el("rect", {
          x: x0 + j * CELL, y: PAD_T + i * CELL,
          width: CELL - 1, height: CELL - 1, fill,
        }));
      });
      if (p === 0) {
        children.push(text(PAD_L - 8, PAD_T + i * CELL + CELL / 2 + 4,
                           fmt(y), "end"));
      }
    });
    xs.forEach((x, j) => {
      children.push(text(x0 + j * CELL + CELL / 2, PAD_T + panelH + 16,
                         fmt(x)));
    });
  });
  children.push(text(14, PAD_T + panelH / 2, "noise level", "middle"));
  return renderSvg(width, height, children);
}
