/** Figure assembly: kind + input CSV -> SVG file. */

import { readFileSync, writeFileSync } from "node:fs";

import { parseCsv } from "./csv.js";
import { convergenceSeries, normalizedBars, trendSeries } from "./transform.js";
import { barChart, lineChart } from "./svg.js";

export type FigureKind = "bars" | "convergence" | "trend";

export interface FigureSpec {
  kind: FigureKind;
  input: string;
  output: string;
  title?: string;
}

export function renderString(kind: FigureKind, csvText: string, title?: string): string {
  const table = parseCsv(csvText);
  if (kind === "bars") {
    return barChart(normalizedBars(table), title ?? "Normalized total cost (worst method = 1.0)");
  }
  if (kind === "convergence") {
    const data = convergenceSeries(table);
    if (data.kind === "bars") {
      return barChart(data.bars, title ?? "Iterations to convergence");
    }
    return lineChart(data.series, title ?? "Cost trace", true);
  }
  if (kind === "trend") {
    return lineChart(trendSeries(table), title ?? "Sweep trend");
  }
  throw new Error(`unknown figure kind '${kind}'`);
}

export function render(spec: FigureSpec): string {
  const csvText = readFileSync(spec.input, "utf8");
  const svg = renderString(spec.kind, csvText, spec.title);
  writeFileSync(spec.output, svg);
  return spec.output;
}
