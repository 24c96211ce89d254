/**
 * Viewing-direction scatter from a pose table: x = azimuth alpha,
 * y = cos(beta) (area-uniform), each point colored by the log-density of
 * its 2D histogram bin.
 */
import { Element, el, renderSvg, sequentialColor, text } from "../svg.js";
import { Poses } from "../schemas.js";

const W = 420;
const H = 260;
const PAD_L = 56;
const PAD_T = 20;
const PAD_B = 36;
const BINS_X = 24;
const BINS_Y = 16;

export function renderScatter(poses: Poses): string {
  const plotW = W - PAD_L - 16;
  const plotH = H - PAD_T - PAD_B;
  const twoPi = 2 * Math.PI;

  const counts = new Array(BINS_X * BINS_Y).fill(0);
  const binOf = (a: number, cb: number) => {
    const i = Math.min(BINS_X - 1,
                       Math.floor(((a % twoPi + twoPi) % twoPi) / twoPi
                                  * BINS_X));
    const j = Math.min(BINS_Y - 1, Math.floor((cb + 1) / 2 * BINS_Y));
    return j * BINS_X + i;
  };
  for (const p of poses) {
    counts[binOf(p.alpha, Math.cos(p.beta))] += 1;
  }
  const maxLog = Math.log1p(Math.max(...counts));

  const children: Element[] = [
    el("rect", {
      x: PAD_L, y: PAD_T, width: plotW, height: plotH,
      fill: "none", stroke: "#222", "stroke-width": 1,
    }),
  ];
  for (const p of poses) {
    const a = (p.alpha % twoPi + twoPi) % twoPi;
    const cb = Math.cos(p.beta);
    const dens = Math.log1p(counts[binOf(p.alpha, cb)]) / (maxLog || 1);
    children.push(el("circle", {
      cx: PAD_L + (a / twoPi) * plotW,
      cy: PAD_T + (1 - (cb + 1) / 2) * plotH,
      r: 2, fill: sequentialColor(dens),
    }));
  }
  children.push(text(PAD_L + plotW / 2, H - 10, "azimuth"));
  children.push(text(16, PAD_T + plotH / 2, "cos(tilt)"));
  return renderSvg(W, H, children);
}
