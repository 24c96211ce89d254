#!/usr/bin/env node
/**
 * Figure scripts: read documented CSV/JSON experiment outputs, write
 * deterministic SVG files.  Inputs are validated first; on schema errors
 * the process exits nonzero and writes nothing.
 */
import fs from "node:fs";
import path from "node:path";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { SchemaError, readQuality, readSweep } from "./csv.js";
import { History, Poses } from "./schemas.js";
import { renderCuration } from "./plots/curation.js";
import { renderHeatmap } from "./plots/heatmap.js";
import { renderScatter } from "./plots/scatter.js";
import { renderStrips } from "./plots/strips.js";

type Render = (inputText: string) => string;

const KINDS: Record<string, Render> = {
  heatmap: (t) => renderHeatmap(readSweep(t)),
  strips: (t) => renderStrips(readSweep(t)),
  scatter: (t) => {
    const parsed = Poses.safeParse(JSON.parse(t));
    if (!parsed.success) {
      throw new SchemaError(`pose table: ${parsed.error.issues[0].message}`);
    }
    return renderScatter(parsed.data);
  },
  curation: (t) => renderCuration(readQuality(t)),
  history: (t) => {
    const parsed = History.safeParse(JSON.parse(t));
    if (!parsed.success || parsed.data.length === 0) {
      throw new SchemaError("history: expected a nonempty half-step array");
    }
    // reuse the strip renderer: one column per half-step kind
    const rows = parsed.data
      .filter((r) => r.z_reference !== null)
      .map((r, i) => ({
        sigma_true: 0,
        sigma_est_or_lambda_or_beta: 0,
        strategy: r.kind,
        trial: i,
        error: 1 - (r.z_reference as number),
      }));
    if (rows.length === 0) {
      throw new SchemaError("history: no reference correlations recorded");
    }
    return renderStrips(rows);
  },
};

export function run(argv: string[]): number {
  const args = yargs(argv)
    .option("kind", {
      choices: Object.keys(KINDS), demandOption: true, type: "string",
    })
    .option("input", { demandOption: true, type: "string" })
    .option("output", { demandOption: true, type: "string" })
    .strict()
    .exitProcess(false)
    .parseSync();

  let text: string;
  try {
    text = fs.readFileSync(args.input, "utf8");
  } catch (e) {
    console.error(`cannot read ${args.input}: ${(e as Error).message}`);
    return 3;
  }
  let svg: string;
  try {
    svg = KINDS[args.kind](text);
  } catch (e) {
    if (e instanceof SchemaError || e instanceof SyntaxError) {
      console.error(`schema error: ${(e as Error).message}`);
      return 3;
    }
    throw e;
  }
  fs.mkdirSync(path.dirname(path.resolve(args.output)), { recursive: true });
  fs.writeFileSync(args.output, svg);
  return 0;
}

const invoked = process.argv[1] ?? "";
if (invoked.endsWith("cli.js") || invoked.endsWith("empm-figures")) {
  process.exit(run(hideBin(process.argv)));
}
