/**
 * Static log-log SVG scatter plots with per-group OLS lines and slope
 * labels, in the style of the variance/bias rate figures.
 */

import { SweepRow } from "./csv.js";
import { loglogSlope, SlopeFit } from "./slope.js";

export type PlotKind = "var-N" | "var-eps" | "bias-eps" | "dt" | "chaos";

export interface PlotSpec {
  kind: PlotKind;
  /** rows of one sweep CSV */
  rows: SweepRow[];
  width?: number;
  height?: number;
  title?: string;
}

interface KindConfig {
  xField: "N" | "eps" | "n";
  metric: string;
  groupField: "N" | "eps" | null;
  guideSlope: number;
  xLabel: string;
  yLabel: string;
}

const KINDS: Record<PlotKind, KindConfig> = {
  "var-N": {
    xField: "N",
    metric: "variance",
    groupField: "eps",
    guideSlope: -1,
    xLabel: "particles N",
    yLabel: "variance",
  },
  "var-eps": {
    xField: "eps",
    metric: "variance",
    groupField: "N",
    guideSlope: -1,
    xLabel: "bandwidth eps",
    yLabel: "variance",
  },
  "bias-eps": {
    xField: "eps",
    metric: "bias_sq",
    groupField: "N",
    guideSlope: 4,
    xLabel: "bandwidth eps",
    yLabel: "squared bias",
  },
  dt: {
    xField: "n",
    metric: "refinement_mse",
    groupField: null,
    guideSlope: -1,
    xLabel: "steps n (dt = T/n)",
    yLabel: "refinement MSE",
  },
  chaos: {
    xField: "N",
    metric: "coupled_path_mse",
    groupField: null,
    guideSlope: -1,
    xLabel: "particles N",
    yLabel: "coupled sup-path MSE",
  },
};

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export interface GroupFit {
  label: string;
  xs: number[];
  ys: number[];
  fit: SlopeFit;
}

export class PlotDataError extends Error {}

/** Collect (x, y) series per group for the requested plot kind. */
export function extractSeries(kind: PlotKind, rows: SweepRow[]): GroupFit[] {
  const cfg = KINDS[kind];
  const aggregate = rows.filter((r) => r.metric === cfg.metric && r.replica === -1);
  if (aggregate.length === 0) {
    throw new PlotDataError(
      `no aggregate "${cfg.metric}" rows in the CSV; is this the right sweep for kind=${kind}?`,
    );
  }
  const groups = new Map<string, SweepRow[]>();
  for (const row of aggregate) {
    const key = cfg.groupField === null ? "" : String(row[cfg.groupField]);
    const bucket = groups.get(key) ?? [];
    bucket.push(row);
    groups.set(key, bucket);
  }
  const out: GroupFit[] = [];
  for (const [key, bucket] of [...groups.entries()].sort()) {
    bucket.sort((a, b) => a[cfg.xField] - b[cfg.xField]);
    const xs = bucket.map((r) => r[cfg.xField]);
    const ys = bucket.map((r) => r.value);
    if (xs.length < 3) {
      throw new PlotDataError(
        `group ${cfg.groupField}=${key || "(all)"} has only ${xs.length} points; need >= 3`,
      );
    }
    const label = cfg.groupField === null ? "" : `${cfg.groupField}=${key}`;
    out.push({ label, xs, ys, fit: loglogSlope(xs, ys) });
  }
  return out;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    for (const m of [1, 2, 5]) {
      const v = m * 10 ** e;
      if (v >= lo / 1.001 && v <= hi * 1.001) ticks.push(v);
    }
  }
  return ticks;
}

const fmt = (v: number) => (v >= 1 && v < 10000 ? String(v) : v.toExponential(0));

/** Render the figure; returns the SVG document as a string. */
export function renderPlot(spec: PlotSpec): string {
  const cfg = KINDS[spec.kind];
  const series = extractSeries(spec.kind, spec.rows);
  const width = spec.width ?? 640;
  const height = spec.height ?? 480;
  const margin = { left: 70, right: 20, top: 40, bottom: 55 };
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;

  const allX = series.flatMap((s) => s.xs);
  const allY = series.flatMap((s) => s.ys);
  const xLo = Math.min(...allX) / 1.15;
  const xHi = Math.max(...allX) * 1.15;
  const yLo = Math.min(...allY) / 1.6;
  const yHi = Math.max(...allY) * 1.6;
  const sx = (v: number) =>
    margin.left + ((Math.log(v) - Math.log(xLo)) / (Math.log(xHi) - Math.log(xLo))) * innerW;
  const sy = (v: number) =>
    margin.top + innerH - ((Math.log(v) - Math.log(yLo)) / (Math.log(yHi) - Math.log(yLo))) * innerH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif" font-size="12">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
  );
  const title = spec.title ?? `${cfg.yLabel} vs ${cfg.xLabel}`;
  parts.push(`<text x="${width / 2}" y="20" text-anchor="middle" font-size="15">${title}</text>`);

  // frame and ticks
  parts.push(
    `<rect x="${margin.left}" y="${margin.top}" width="${innerW}" height="${innerH}" fill="none" stroke="#333"/>`,
  );
  for (const t of logTicks(xLo, xHi)) {
    const px = sx(t);
    parts.push(
      `<line x1="${px.toFixed(1)}" y1="${margin.top + innerH}" x2="${px.toFixed(1)}" y2="${margin.top + innerH + 5}" stroke="#333"/>`,
      `<line x1="${px.toFixed(1)}" y1="${margin.top}" x2="${px.toFixed(1)}" y2="${margin.top + innerH}" stroke="#eee"/>`,
      `<text x="${px.toFixed(1)}" y="${margin.top + innerH + 18}" text-anchor="middle">${fmt(t)}</text>`,
    );
  }
  for (const t of logTicks(yLo, yHi)) {
    const py = sy(t);
    parts.push(
      `<line x1="${margin.left - 5}" y1="${py.toFixed(1)}" x2="${margin.left}" y2="${py.toFixed(1)}" stroke="#333"/>`,
      `<line x1="${margin.left}" y1="${py.toFixed(1)}" x2="${margin.left + innerW}" y2="${py.toFixed(1)}" stroke="#eee"/>`,
      `<text x="${margin.left - 8}" y="${(py + 4).toFixed(1)}" text-anchor="end">${t.toExponential(0)}</text>`,
    );
  }
  parts.push(
    `<text x="${margin.left + innerW / 2}" y="${height - 12}" text-anchor="middle">${cfg.xLabel}</text>`,
    `<text transform="translate(16 ${margin.top + innerH / 2}) rotate(-90)" text-anchor="middle">${cfg.yLabel}</text>`,
  );

  // reference guide line through the centroid of the first series
  const guide = series[0];
  const gx = Math.exp((Math.log(Math.min(...guide.xs)) + Math.log(Math.max(...guide.xs))) / 2);
  const gy = Math.exp(
    guide.ys.map(Math.log).reduce((s, v) => s + v, 0) / guide.ys.length,
  );
  const guideY = (x: number) => gy * 1.8 * (x / gx) ** cfg.guideSlope;
  parts.push(
    `<line x1="${sx(xLo * 1.05).toFixed(1)}" y1="${sy(guideY(xLo * 1.05)).toFixed(1)}" x2="${sx(xHi / 1.05).toFixed(1)}" y2="${sy(guideY(xHi / 1.05)).toFixed(1)}" stroke="#999" stroke-dasharray="6 4"/>`,
    `<text x="${sx(xHi / 1.05).toFixed(1)}" y="${(sy(guideY(xHi / 1.05)) - 6).toFixed(1)}" text-anchor="end" fill="#666">slope ${cfg.guideSlope}</text>`,
  );

  // series: points, fitted line, slope annotation
  series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    const { slope, intercept } = s.fit;
    const lineY = (x: number) => Math.exp(intercept + slope * Math.log(x));
    const x0 = Math.min(...s.xs);
    const x1 = Math.max(...s.xs);
    parts.push(
      `<line x1="${sx(x0).toFixed(1)}" y1="${sy(lineY(x0)).toFixed(1)}" x2="${sx(x1).toFixed(1)}" y2="${sy(lineY(x1)).toFixed(1)}" stroke="${color}"/>`,
    );
    for (let k = 0; k < s.xs.length; k++) {
      parts.push(
        `<circle cx="${sx(s.xs[k]).toFixed(1)}" cy="${sy(s.ys[k]).toFixed(1)}" r="4" fill="${color}"/>`,
      );
    }
    const label = s.label ? `${s.label}: ` : "";
    parts.push(
      `<text x="${margin.left + 10}" y="${margin.top + 16 + 16 * i}" fill="${color}">${label}slope ${slope.toFixed(2)} (r2 ${s.fit.r2.toFixed(3)})</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}
