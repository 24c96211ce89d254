/**
 * Strategy strip chart: one labeled column per sweep strategy, one dot per
 * trial error, with the median marked by a horizontal bar.
 */
import { median } from "../csv.js";
import { Element, el, renderSvg, text } from "../svg.js";
import { SweepRow } from "../schemas.js";

const COL = 90;
const PAD_L = 56;
const PAD_T = 24;
const PLOT_H = 220;
const PAD_B = 40;

export function renderStrips(rows: SweepRow[]): string {
  const strategies = [...new Set(rows.map((r) => r.strategy))].sort();
  const errs = rows.map((r) => r.error);
  const lo = Math.min(...errs);
  const hi = Math.max(...errs);
  const span = hi > lo ? hi - lo : 1;
  const yOf = (e: number) => PAD_T + PLOT_H * (1 - (e - lo) / span);

  const width = PAD_L + strategies.length * COL + 20;
  const height = PAD_T + PLOT_H + PAD_B;
  const children: Element[] = [
    el("line", {
      x1: PAD_L - 10, y1: PAD_T, x2: PAD_L - 10, y2: PAD_T + PLOT_H,
      stroke: "#222", "stroke-width": 1,
    }),
    text(PAD_L - 16, PAD_T + 4, hi.toPrecision(3), "end", 10),
    text(PAD_L - 16, PAD_T + PLOT_H + 4, lo.toPrecision(3), "end", 10),
  ];
  strategies.forEach((s, i) => {
    const cx = PAD_L + i * COL + COL / 2;
    const sel = rows.filter((r) => r.strategy === s);
    sel.forEach((r, j) => {
      // deterministic horizontal jitter from the trial index
      const dx = ((r.trial * 37 + j * 11) % 40) - 20;
      children.push(el("circle", {
        cx: cx + dx * 0.8, cy: yOf(r.error), r: 2.4,
        fill: "#3566a8", "fill-opacity": "0.55",
      }));
    });
    const m = median(sel.map((r) => r.error));
    children.push(el("line", {
      x1: cx - 24, y1: yOf(m), x2: cx + 24, y2: yOf(m),
      stroke: "#c33", "stroke-width": 2,
    }));
    children.push(text(cx, PAD_T + PLOT_H + 20, s));
  });
  children.push(text(16, PAD_T + PLOT_H / 2, "error"));
  return renderSvg(width, height, children);
}
