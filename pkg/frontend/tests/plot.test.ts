import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { CsvFormatError, parseSweepCsv } from "../src/csv.js";
import { extractSeries, PlotDataError, renderPlot } from "../src/plot.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, "..", "..", "fixtures");

function syntheticCsv(law: (x: number) => number): string {
  const lines = ["mode,d,N,eps,n,replica,metric,value,seed"];
  for (const N of [64, 128, 256, 512]) {
    lines.push(`variance-sweep,1,${N},0.5,10,-1,variance,${law(N)},1`);
  }
  return lines.join("\n") + "\n";
}

describe("csv parsing", () => {
  it("reads the contract header", () => {
    const rows = parseSweepCsv(readFileSync(join(fixtures, "sweep_small.csv"), "utf8"));
    expect(rows.length).toBeGreaterThan(0);
    expect(rows[0].mode).toBe("variance-sweep");
  });

  it("names a missing column", () => {
    expect(() => parseSweepCsv("mode,d,N,eps,n,replica,metric,value\nx,1,2,0.5,1,0,m,3\n")).toThrow(
      /seed/,
    );
    expect(() => parseSweepCsv("")).toThrow(CsvFormatError);
  });
});

describe("renderPlot", () => {
  it("annotates slope -1.00 for an exact inverse law", () => {
    const rows = parseSweepCsv(syntheticCsv((x) => 3.0 / x));
    const svg = renderPlot({ kind: "var-N", rows });
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("slope -1.00");
  });

  it("annotates slope 4.00 for an exact quartic law", () => {
    const lines = ["mode,d,N,eps,n,replica,metric,value,seed"];
    for (const eps of [0.25, 0.5, 1.0, 2.0]) {
      lines.push(`bias-sweep,1,4096,${eps},10,-1,bias_sq,${0.01 * eps ** 4},1`);
    }
    const svg = renderPlot({ kind: "bias-eps", rows: parseSweepCsv(lines.join("\n")) });
    expect(svg).toContain("slope 4.00");
  });

  it("renders the three rate figures from a completed sweep CSV", () => {
    const sweep = parseSweepCsv(readFileSync(join(fixtures, "sweep_small.csv"), "utf8"));
    for (const kind of ["var-N", "var-eps", "bias-eps"] as const) {
      const svg = renderPlot({ kind, rows: sweep });
      expect(svg.startsWith("<svg")).toBe(true);
      expect(svg).toContain("</svg>");
      expect(svg).toContain("circle");
    }
  });

  it("renders dt and chaos figures from their sweeps", () => {
    const dt = parseSweepCsv(readFileSync(join(fixtures, "dt_small.csv"), "utf8"));
    expect(renderPlot({ kind: "dt", rows: dt })).toContain("</svg>");
    const chaos = parseSweepCsv(readFileSync(join(fixtures, "chaos_small.csv"), "utf8"));
    expect(renderPlot({ kind: "chaos", rows: chaos })).toContain("</svg>");
  });

  it("draws the reference guide line with the expected slope label", () => {
    const sweep = parseSweepCsv(readFileSync(join(fixtures, "sweep_small.csv"), "utf8"));
    expect(renderPlot({ kind: "var-N", rows: sweep })).toContain("slope -1");
    expect(renderPlot({ kind: "bias-eps", rows: sweep })).toContain("slope 4");
  });

  it("fails descriptively when the metric is absent", () => {
    const dt = parseSweepCsv(readFileSync(join(fixtures, "dt_small.csv"), "utf8"));
    expect(() => renderPlot({ kind: "var-N", rows: dt })).toThrow(PlotDataError);
    expect(() => renderPlot({ kind: "var-N", rows: dt })).toThrow(/variance/);
  });

  it("groups series by the grouping field", () => {
    const sweep = parseSweepCsv(readFileSync(join(fixtures, "sweep_small.csv"), "utf8"));
    const series = extractSeries("var-N", sweep);
    expect(series.map((s) => s.label)).toEqual(["eps=0.3", "eps=0.5", "eps=0.8"]);
    for (const s of series) {
      expect(s.xs).toEqual([64, 128, 256]);
    }
  });

  it("cli writes an svg file", async () => {
    const { main } = await import("../src/cli.js");
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const out = join(dir, "fig.svg");
    const code = main([join(fixtures, "sweep_small.csv"), "--kind", "var-N", "--out", out]);
    expect(code).toBe(0);
    expect(readFileSync(out, "utf8")).toContain("</svg>");
    expect(main(["missing.csv", "--kind", "var-N", "--out", out])).not.toBe(0);
    expect(main([join(fixtures, "sweep_small.csv"), "--kind", "bogus", "--out", out])).toBe(2);
  });
});
