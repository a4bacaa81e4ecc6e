/**
 * plots <csv> --kind {var-N, var-eps, bias-eps, dt, chaos} --out <svg>
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseSweepCsv } from "./csv.js";
import { PlotKind, renderPlot } from "./plot.js";

const KINDS: PlotKind[] = ["var-N", "var-eps", "bias-eps", "dt", "chaos"];

export function main(argv: string[]): number {
  const args = [...argv];
  let kind: string | undefined;
  let out: string | undefined;
  let title: string | undefined;
  const positional: string[] = [];
  while (args.length > 0) {
    const a = args.shift()!;
    if (a === "--kind") kind = args.shift();
    else if (a === "--out") out = args.shift();
    else if (a === "--title") title = args.shift();
    else if (a === "--help" || a === "-h") {
      console.log("usage: plots <sweep.csv> --kind {var-N,var-eps,bias-eps,dt,chaos} --out fig.svg");
      return 0;
    } else positional.push(a);
  }
  if (positional.length !== 1 || !kind || !out) {
    console.error("usage: plots <sweep.csv> --kind {var-N,var-eps,bias-eps,dt,chaos} --out fig.svg");
    return 2;
  }
  if (!KINDS.includes(kind as PlotKind)) {
    console.error(`unknown --kind ${kind}; expected one of ${KINDS.join(", ")}`);
    return 2;
  }
  let svg: string;
  try {
    const rows = parseSweepCsv(readFileSync(positional[0], "utf8"));
    svg = renderPlot({ kind: kind as PlotKind, rows, title });
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  writeFileSync(out, svg);
  console.log(`wrote ${out}`);
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
