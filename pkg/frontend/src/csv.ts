import Papa from "papaparse";
import { z } from "zod";
import { SWEEP_COLUMNS, QualityRow, SweepRow } from "./schemas.js";

export class SchemaError extends Error {}

function parseCsv(text: string): Record<string, unknown>[] {
  const res = Papa.parse<Record<string, unknown>>(text.trim(), {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (res.errors.length > 0) {
    throw new SchemaError(`CSV parse error: ${res.errors[0].message}`);
  }
  return res.data;
}

function validateRows<T>(rows: Record<string, unknown>[], schema: z.ZodType<T>,
                         what: string): T[] {
  if (rows.length === 0) {
    throw new SchemaError(`${what}: no data rows`);
  }
  return rows.map((row, i) => {
    const r = schema.safeParse(row);
    if (!r.success) {
      throw new SchemaError(
        `${what}: row ${i + 1}: ${r.error.issues[0].path.join(".")}: ` +
        r.error.issues[0].message,
      );
    }
    return r.data;
  });
}

export function readSweep(text: string): SweepRow[] {
  const rows = parseCsv(text);
  if (rows.length > 0) {
    const cols = Object.keys(rows[0]);
    for (const c of SWEEP_COLUMNS) {
      if (!cols.includes(c)) {
        throw new SchemaError(`sweep table: missing column ${c}`);
      }
    }
  }
  return validateRows(rows, SweepRow, "sweep table");
}

export function readQuality(text: string): QualityRow[] {
  return validateRows(parseCsv(text), QualityRow, "quality table");
}

export function median(xs: number[]): number {
  const s = [...xs].sort((a, b) => a - b);
  const m = s.length >> 1;
  return s.length % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
}
