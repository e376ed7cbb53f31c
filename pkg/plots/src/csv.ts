/**
 * Minimal CSV reading for the harness output schemas.
 * Fails loudly on schema mismatch: plotting silently wrong data is worse
 * than not plotting.
 */

export class SchemaError extends Error {}
export class EmptyInput extends Error {}

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new EmptyInput("empty CSV");
  const columns = splitLine(lines[0]);
  const rows: Record<string, string>[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = splitLine(lines[i]);
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `row ${i} has ${parts.length} fields, header has ${columns.length}`,
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((c, j) => (row[c] = parts[j]));
    rows.push(row);
  }
  if (rows.length === 0) throw new EmptyInput("CSV has a header but no rows");
  return { columns, rows };
}

function splitLine(line: string): string[] {
  // harness CSVs never quote commas; keep the parser honest about that
  if (line.includes('"')) {
    throw new SchemaError("quoted fields are not part of the results schema");
  }
  return line.split(",").map((s) => s.trim());
}

export function requireColumns(table: Table, needed: string[], what: string): void {
  const missing = needed.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(`${what}: missing columns ${missing.join(", ")}`);
  }
}

export function num(row: Record<string, string>, col: string): number {
  const v = Number(row[col]);
  if (!Number.isFinite(v)) {
    throw new SchemaError(`non-numeric value '${row[col]}' in column ${col}`);
  }
  return v;
}
