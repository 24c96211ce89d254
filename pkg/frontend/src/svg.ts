/** Minimal deterministic SVG assembly: fixed precision, no timestamps. */

export function fmt(x: number): string {
  // fixed 4-decimal coordinates keep output byte-stable across platforms
  return x.toFixed(4).replace(/\.?0+$/, "") || "0";
}

export interface Element {
  tag: string;
  attrs: Record<string, string | number>;
  children?: Element[];
  text?: string;
}

export function el(tag: string, attrs: Record<string, string | number>,
                   children: Element[] = [], text?: string): Element {
  return { tag, attrs, children, text };
}

function renderEl(e: Element, indent: string): string {
  const attrs = Object.entries(e.attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join(" ");
  const open = attrs.length ? `<${e.tag} ${attrs}` : `<${e.tag}`;
  const kids = e.children ?? [];
  if (kids.length === 0 && e.text === undefined) {
    return `${indent}${open}/>`;
  }
  const inner = [
    ...(e.text !== undefined ? [`${indent}  ${escapeText(e.text)}`] : []),
    ...kids.map((c) => renderEl(c, indent + "  ")),
  ].join("\n");
  return `${indent}${open}>\n${inner}\n${indent}</${e.tag}>`;
}

function escapeText(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderSvg(width: number, height: number,
                          children: Element[]): string {
  const root = el("svg", {
    xmlns: "http://www.w3.org/2000/svg",
    width,
    height,
    viewBox: `0 0 ${fmt(width)} ${fmt(height)}`,
  }, children);
  return renderEl(root, "") + "\n";
}

/** Dark-blue -> yellow sequential scale on t in [0, 1]. */
export function sequentialColor(t: number): string {
  const c = Math.max(0, Math.min(1, t));
  const r = Math.round(20 + 235 * c);
  const g = Math.round(25 + 200 * c);
  const b = Math.round(90 + 40 * (1 - c) - 60 * c);
  return `rgb(${r},${g},${b})`;
}

export function text(x: number, y: number, s: string,
                     anchor = "middle", size = 11): Element {
  return el("text", {
    x, y, "text-anchor": anchor, "font-size": size,
    "font-family": "Helvetica, Arial, sans-serif", fill: "#222",
  }, [], s);
}
