/**
 * Pure data shaping: per-scenario normalization against the worst method,
 * mean/std aggregation over seeds, and series extraction for traces/sweeps.
 * No computation beyond normalization and aggregation happens here.
 */

import { num, requireColumns, SchemaError, EmptyInput, Table } from "./csv.js";

export interface Bar {
  scenario: string;
  method: string;
  value: number; // mean T normalized: worst method of the scenario == 1.0
  err: number; // std of per-seed values on the same scale
}

function groupBy<T>(items: T[], key: (t: T) => string): Map<string, T[]> {
  const out = new Map<string, T[]>();
  for (const it of items) {
    const k = key(it);
    const got = out.get(k);
    if (got) got.push(it);
    else out.set(k, [it]);
  }
  return out;
}

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}

function std(xs: number[]): number {
  if (xs.length < 2) return 0;
  const m = mean(xs);
  return Math.sqrt(xs.reduce((a, b) => a + (b - m) * (b - m), 0) / xs.length);
}

/** Grouped-bar data from results.csv; worst method per scenario maps to 1.0. */
export function normalizedBars(table: Table): Bar[] {
  requireColumns(table, ["scenario", "method", "seed", "T"], "results");
  const rows = table.rows.filter((r) => !r.error || r.error === "");
  if (rows.length === 0) throw new EmptyInput("all result rows carry errors");
  const bars: Bar[] = [];
  for (const [scenario, group] of groupBy(rows, (r) => r.scenario)) {
    const perMethod = groupBy(group, (r) => r.method);
    const means = new Map<string, number>();
    for (const [method, cells] of perMethod) {
      means.set(method, mean(cells.map((r) => num(r, "T"))));
    }
    const worst = Math.max(...means.values());
    if (!(worst > 0)) throw new SchemaError(`scenario ${scenario}: no positive costs`);
    for (const [method, cells] of perMethod) {
      const values = cells.map((r) => num(r, "T") / worst);
      bars.push({ scenario, method, value: means.get(method)! / worst, err: std(values) });
    }
  }
  bars.sort((a, b) =>
    a.scenario === b.scenario
      ? a.method.localeCompare(b.method)
      : a.scenario.localeCompare(b.scenario),
  );
  return bars;
}

export interface Series {
  label: string;
  points: { x: number; y: number }[];
}

/** Convergence data: either iteration-count bars from results.csv or a cost
 * trace (slot/iter, T) from an optimizer trace file. */
export function convergenceSeries(table: Table): { kind: "bars"; bars: Bar[] } | { kind: "lines"; series: Series[] } {
  if (table.columns.includes("slot") || table.columns.includes("iter")) {
    const xcol = table.columns.includes("slot") ? "slot" : "iter";
    requireColumns(table, [xcol, "T"], "trace");
    const points = table.rows.map((r) => ({ x: num(r, xcol), y: num(r, "T") }));
    return { kind: "lines", series: [{ label: "T", points }] };
  }
  requireColumns(table, ["scenario", "method", "seed", "iters"], "results");
  const bars: Bar[] = [];
  for (const [scenario, group] of groupBy(table.rows, (r) => r.scenario)) {
    for (const [method, cells] of groupBy(group, (r) => r.method)) {
      const vals = cells.map((r) => num(r, "iters"));
      bars.push({ scenario, method, value: mean(vals), err: std(vals) });
    }
  }
  bars.sort((a, b) =>
    a.scenario === b.scenario
      ? a.method.localeCompare(b.method)
      : a.scenario.localeCompare(b.scenario),
  );
  return { kind: "bars", bars };
}

/** Sweep trends: T per method against the knob value; result-size sweeps add
 * the CI/DI mean hop distances. */
export function trendSeries(table: Table): Series[] {
  requireColumns(table, ["method", "value", "T"], "sweep");
  const out: Series[] = [];
  const hasHops =
    table.columns.includes("ci_hops") && table.columns.includes("di_hops");
  for (const [method, group] of groupBy(table.rows, (r) => r.method)) {
    // group by the parsed numeric knob value ("1.0" and "1" are the same x)
    const byValue = new Map<number, Record<string, string>[]>();
    for (const r of group) {
      const x = num(r, "value");
      const got = byValue.get(x);
      if (got) got.push(r);
      else byValue.set(x, [r]);
    }
    const xs = [...byValue.keys()].sort((a, b) => a - b);
    const tPoints = xs.map((x) => ({
      x,
      y: mean(byValue.get(x)!.map((r) => num(r, "T"))),
    }));
    out.push({ label: `${method} T`, points: tPoints });
    if (hasHops) {
      for (const col of ["ci_hops", "di_hops"]) {
        const pts = xs
          .map((x) => {
            const vals = byValue
              .get(x)!
              .map((r) => Number(r[col]))
              .filter((v) => Number.isFinite(v));
            return vals.length > 0 ? { x, y: mean(vals) } : null;
          })
          .filter((p): p is { x: number; y: number } => p !== null);
        if (pts.length > 0) out.push({ label: `${method} ${col}`, points: pts });
      }
    }
  }
  out.sort((a, b) => a.label.localeCompare(b.label));
  return out;
}
