/**
 * Strict reader for rcmlab experiment CSVs.
 *
 * The producer writes plain comma-separated values with a header row and
 * repr() floats, never quoting, so anything fancier than a split is a sign
 * the file is not one of ours — and the right response is a loud error,
 * not a guess.
 */

export class CsvError extends Error {}

export interface Table {
  file: string;
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string, file: string): Table {
  if (text.trim() === "") {
    throw new CsvError(`${file}: file is empty — nothing to plot`);
  }
  // the producer ends every line with \n; tolerate a missing final newline
  const lines = text.split("\n");
  if (lines[lines.length - 1] === "") lines.pop();
  const header = (lines[0] ?? "").split(",");
  if (header.some((h) => h.trim() === "")) {
    throw new CsvError(`${file}: header has an unnamed column: ${lines[0]}`);
  }
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = (lines[i] as string).split(",");
    if (cells.length !== header.length) {
      throw new CsvError(
        `${file}: row ${i + 1} has ${cells.length} cells, header has ${header.length}`,
      );
    }
    rows.push(cells);
  }
  if (rows.length === 0) {
    throw new CsvError(`${file}: no data rows — nothing to plot`);
  }
  return { file, header, rows };
}

/** Error out with the full column diff unless every required column exists. */
export function requireColumns(table: Table, required: string[]): void {
  const have = new Set(table.header);
  const missing = required.filter((c) => !have.has(c));
  if (missing.length > 0) {
    const extra = table.header.filter((c) => !required.includes(c));
    throw new CsvError(
      `${table.file}: schema mismatch — missing column(s) [${missing.join(", ")}]; ` +
        `required [${required.join(", ")}]; found [${table.header.join(", ")}]` +
        (extra.length > 0 ? `; unconsumed [${extra.join(", ")}]` : ""),
    );
  }
}

function columnIndex(table: Table, name: string): number {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new CsvError(`${table.file}: no column named "${name}"`);
  }
  return idx;
}

/** Numeric column; "nan" is legal (the producer writes it for absent stats). */
export function numbers(table: Table, name: string): number[] {
  const idx = columnIndex(table, name);
  return table.rows.map((row, r) => {
    const cell = row[idx] as string;
    if (cell === "nan") return NaN;
    const value = Number(cell);
    if (cell.trim() === "" || Number.isNaN(value)) {
      throw new CsvError(
        `${table.file}: row ${r + 2}, column "${name}": "${cell}" is not a number`,
      );
    }
    return value;
  });
}

export function strings(table: Table, name: string): string[] {
  const idx = columnIndex(table, name);
  return table.rows.map((row) => row[idx] as string);
}

/** Column that must hold one single value (targets, fitted constants). */
export function uniformNumber(table: Table, name: string): number {
  const values = numbers(table, name);
  const first = values[0] as number;
  for (const v of values) {
    if (!(v === first || (Number.isNaN(v) && Number.isNaN(first)))) {
      throw new CsvError(
        `${table.file}: column "${name}" is expected to be constant, ` +
          `got both ${first} and ${v}`,
      );
    }
  }
  return first;
}
