import { readFileSync } from "fs";

export const CSV_HEADER = "# ibflow-csv v1";

/** Raised on any input whose shape does not match the documented schema. */
export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface IbflowCsv {
  columns: string[];
  /** one entry per data row, cells kept as strings */
  rows: string[][];
  path: string;
}

/** Read a versioned ibflow CSV: a `# ibflow-csv v1` comment line, a header
 * row, then comma-separated data rows (no quoting is ever emitted). */
export function readIbflowCsv(path: string): IbflowCsv {
  const text = readFileSync(path, "utf8");
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length < 2 || lines[0].trim() !== CSV_HEADER) {
    throw new SchemaError(`${path}: missing '${CSV_HEADER}' header line`);
  }
  const columns = lines[1].split(",").map((c) => c.trim());
  const rows: string[][] = [];
  for (let i = 2; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new SchemaError(
        `${path}: row ${i - 1} has ${cells.length} cells, expected ${columns.length}`
      );
    }
    rows.push(cells);
  }
  return { columns, rows, path };
}

/** Column lookup that fails loudly, naming every missing column. */
export function requireColumns(csv: IbflowCsv, needed: string[]): Map<string, number> {
  const missing = needed.filter((c) => !csv.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `${csv.path}: missing column(s) ${missing.join(", ")} ` +
        `(found: ${csv.columns.join(", ")})`
    );
  }
  return new Map(needed.map((c) => [c, csv.columns.indexOf(c)]));
}

export function numericColumn(csv: IbflowCsv, index: number): number[] {
  return csv.rows.map((row, i) => {
    const v = Number(row[index]);
    if (!Number.isFinite(v)) {
      throw new SchemaError(
        `${csv.path}: non-numeric value '${row[index]}' in row ${i + 1}, column ${
          csv.columns[index]
        }`
      );
    }
    return v;
  });
}
