#!/usr/bin/env node
/** CLI: render --kind bars --in results.csv --out fig.svg [--title T] */

import { render, FigureKind } from "./render.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a.startsWith("--")) {
      out.set(a.slice(2), argv[i + 1] ?? "");
      i++;
    } else if (!out.has("_cmd")) {
      out.set("_cmd", a);
    }
  }
  return out;
}

function main(): number {
  const args = parseArgs(process.argv.slice(2));
  const cmd = args.get("_cmd") ?? "render";
  if (cmd !== "render") {
    console.error(`unknown command '${cmd}' (only: render)`);
    return 2;
  }
  const kind = args.get("kind");
  const input = args.get("in");
  const output = args.get("out");
  if (!kind || !input || !output) {
    console.error("usage: render --kind {bars|convergence|trend} --in FILE.csv --out FILE.svg [--title T]");
    return 2;
  }
  if (!["bars", "convergence", "trend"].includes(kind)) {
    console.error(`bad --kind '${kind}'`);
    return 2;
  }
  try {
    const path = render({
      kind: kind as FigureKind,
      input,
      output,
      title: args.get("title"),
    });
    console.log(`wrote ${path}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main());
