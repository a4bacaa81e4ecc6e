/**
 * Reader for the long-format sweep CSV contract:
 *   mode,d,N,eps,n,replica,metric,value,seed
 * One metric per row; aggregate rows carry replica = -1.
 */

export interface SweepRow {
  mode: string;
  d: number;
  N: number;
  eps: number;
  n: number;
  replica: number;
  metric: string;
  value: number;
  seed: number;
}

export const REQUIRED_COLUMNS = [
  "mode",
  "d",
  "N",
  "eps",
  "n",
  "replica",
  "metric",
  "value",
  "seed",
] as const;

export class CsvFormatError extends Error {}

/** Parse CSV text; the header must contain every contract column. */
export function parseSweepCsv(text: string): SweepRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new CsvFormatError("empty CSV");
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const index = new Map<string, number>(header.map((h, i) => [h, i]));
  for (const col of REQUIRED_COLUMNS) {
    if (!index.has(col)) {
      throw new CsvFormatError(`missing required column "${col}" (header: ${lines[0]})`);
    }
  }
  const rows: SweepRow[] = [];
  for (let k = 1; k < lines.length; k++) {
    const parts = lines[k].split(",");
    if (parts.length < header.length) {
      throw new CsvFormatError(`row ${k + 1} has ${parts.length} fields, expected ${header.length}`);
    }
    const pick = (col: string) => parts[index.get(col)!];
    const num = (col: string) => {
      const v = Number(pick(col));
      if (Number.isNaN(v)) {
        throw new CsvFormatError(`row ${k + 1}: column "${col}" is not numeric: ${pick(col)}`);
      }
      return v;
    };
    rows.push({
      mode: pick("mode"),
      d: num("d"),
      N: num("N"),
      eps: num("eps"),
      n: num("n"),
      replica: num("replica"),
      metric: pick("metric"),
      value: num("value"),
      seed: num("seed"),
    });
  }
  return rows;
}
