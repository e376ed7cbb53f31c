/**
 * Deterministic SVG output: fixed canvas, fixed palette, fixed-precision
 * coordinates. Identical inputs produce byte-identical files.
 */

import { Bar, Series } from "./transform.js";

const W = 900;
const H = 480;
const MARGIN = { left: 70, right: 30, top: 40, bottom: 90 };
const PALETTE = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4",
                 "#8c613c", "#dc7ec0", "#797979"];

function fmt(x: number): string {
  return x.toFixed(2);
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function open(title: string): string[] {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`,
    `<rect width="${W}" height="${H}" fill="white"/>`,
    `<text x="${W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">${esc(title)}</text>`,
  ];
}

function axis(parts: string[], yTicks: { v: number; label: string }[],
              yOf: (v: number) => number): void {
  const x0 = MARGIN.left;
  const x1 = W - MARGIN.right;
  const y1 = H - MARGIN.bottom;
  parts.push(`<line x1="${x0}" y1="${MARGIN.top}" x2="${x0}" y2="${y1}" stroke="black"/>`);
  parts.push(`<line x1="${x0}" y1="${y1}" x2="${x1}" y2="${y1}" stroke="black"/>`);
  for (const t of yTicks) {
    const y = yOf(t.v);
    parts.push(`<line x1="${x0 - 4}" y1="${fmt(y)}" x2="${x0}" y2="${fmt(y)}" stroke="black"/>`);
    parts.push(`<text x="${x0 - 8}" y="${fmt(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">${esc(t.label)}</text>`);
  }
}

/** Grouped bar chart: one group per scenario, one bar per method. */
export function barChart(bars: Bar[], title: string): string {
  const scenarios = [...new Set(bars.map((b) => b.scenario))];
  const methods = [...new Set(bars.map((b) => b.method))];
  const vmax = Math.max(...bars.map((b) => b.value + b.err), 1.0);
  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;
  const yOf = (v: number) => H - MARGIN.bottom - (v / vmax) * plotH;
  const groupW = plotW / scenarios.length;
  const barW = (groupW * 0.8) / methods.length;

  const parts = open(title);
  const ticks = [0, 0.25, 0.5, 0.75, 1.0].map((f) => ({
    v: f * vmax,
    label: (f * vmax).toFixed(2),
  }));
  axis(parts, ticks, yOf);
  bars.forEach((b) => {
    const si = scenarios.indexOf(b.scenario);
    const mi = methods.indexOf(b.method);
    const x = MARGIN.left + si * groupW + groupW * 0.1 + mi * barW;
    const y = yOf(b.value);
    const h = H - MARGIN.bottom - y;
    parts.push(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(barW * 0.92)}" height="${fmt(h)}" fill="${PALETTE[mi % PALETTE.length]}"/>`);
    if (b.err > 0) {
      const cx = x + (barW * 0.92) / 2;
      parts.push(`<line x1="${fmt(cx)}" y1="${fmt(yOf(b.value + b.err))}" x2="${fmt(cx)}" y2="${fmt(yOf(Math.max(0, b.value - b.err)))}" stroke="black"/>`);
    }
  });
  scenarios.forEach((s, si) => {
    const x = MARGIN.left + si * groupW + groupW / 2;
    parts.push(`<text x="${fmt(x)}" y="${H - MARGIN.bottom + 18}" text-anchor="middle" font-family="sans-serif" font-size="12">${esc(s)}</text>`);
  });
  methods.forEach((m, mi) => {
    const x = MARGIN.left + mi * 130;
    const y = H - 28;
    parts.push(`<rect x="${x}" y="${y - 10}" width="12" height="12" fill="${PALETTE[mi % PALETTE.length]}"/>`);
    parts.push(`<text x="${x + 16}" y="${y}" font-family="sans-serif" font-size="12">${esc(m)}</text>`);
  });
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

/** Line chart for traces and sweep trends. */
export function lineChart(series: Series[], title: string, logY = false): string {
  const pts = series.flatMap((s) => s.points);
  if (pts.length === 0) throw new Error("no points to plot");
  const xs = pts.map((p) => p.x);
  const ys = pts.map((p) => (logY ? Math.log10(Math.max(p.y, 1e-12)) : p.y));
  const xmin = Math.min(...xs);
  const xmax = Math.max(...xs);
  const ymin = Math.min(...ys);
  const ymax = Math.max(...ys);
  const xspan = xmax - xmin || 1;
  const yspan = ymax - ymin || 1;
  const plotW = W - MARGIN.left - MARGIN.right;
  const plotH = H - MARGIN.top - MARGIN.bottom;
  const xOf = (x: number) => MARGIN.left + ((x - xmin) / xspan) * plotW;
  const yOf = (yv: number) => {
    const v = logY ? Math.log10(Math.max(yv, 1e-12)) : yv;
    return H - MARGIN.bottom - ((v - ymin) / yspan) * plotH;
  };
  const parts = open(title);
  const ticks = [0, 0.5, 1.0].map((f) => {
    const v = ymin + f * yspan;
    return { v: logY ? Math.pow(10, v) : v, label: (logY ? Math.pow(10, v) : v).toPrecision(3) };
  });
  axis(parts, ticks, yOf);
  series.forEach((s, si) => {
    const d = s.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(xOf(p.x))},${fmt(yOf(p.y))}`)
      .join(" ");
    parts.push(`<path d="${d}" fill="none" stroke="${PALETTE[si % PALETTE.length]}" stroke-width="2"/>`);
    const y = H - 28;
    const x = MARGIN.left + si * 150;
    parts.push(`<rect x="${x}" y="${y - 10}" width="12" height="12" fill="${PALETTE[si % PALETTE.length]}"/>`);
    parts.push(`<text x="${x + 16}" y="${y}" font-family="sans-serif" font-size="12">${esc(s.label)}</text>`);
  });
  parts.push(`<text x="${W / 2}" y="${H - MARGIN.bottom + 30}" text-anchor="middle" font-family="sans-serif" font-size="12">x</text>`);
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
