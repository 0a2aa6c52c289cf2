/**
 * Walk an experiment output directory, render every known CSV to SVG, and
 * write a summary document tying figures to their sources.
 */

import fs from "node:fs";
import path from "node:path";

import { CsvError, Table, parseCsv } from "./csv.js";
import {
  Figure,
  covScalingFigure,
  diagBoundsFigure,
  gffLaplaceFigure,
  lltErrorFigure,
} from "./figures.js";

export interface FigureSpec {
  csv: string;
  out: string;
  kind: string;
  render: (table: Table) => Figure;
}

/** Known inputs, in the order they appear in the summary document. */
export const FIGURES: FigureSpec[] = [
  { csv: "llt-quenched.csv", out: "llt-errors.svg", kind: "LLT error vs n (log-log)", render: lltErrorFigure },
  { csv: "diag-bounds.csv", out: "diag-bounds.svg", kind: "diagonal bound log-log fit", render: diagBoundsFigure },
  { csv: "gl-scaling.csv", out: "cov-scaling.svg", kind: "covariance scaling vs target", render: covScalingFigure },
  { csv: "gl-gff.csv", out: "gff-laplace.svg", kind: "GFF Laplace curves", render: gffLaplaceFigure },
];

export interface Rendered {
  spec: FigureSpec;
  rows: number;
  caption: string;
}

export function renderDirectory(inDir: string, outDir: string): Rendered[] {
  const found = FIGURES.filter((spec) => fs.existsSync(path.join(inDir, spec.csv)));
  if (found.length === 0) {
    throw new CsvError(
      `${inDir}: none of the known experiment CSVs found ` +
        `(looked for ${FIGURES.map((s) => s.csv).join(", ")})`,
    );
  }
  fs.mkdirSync(outDir, { recursive: true });
  const rendered: Rendered[] = [];
  for (const spec of found) {
    const file = path.join(inDir, spec.csv);
    const table = parseCsv(fs.readFileSync(file, "utf8"), spec.csv);
    const figure = spec.render(table);
    fs.writeFileSync(path.join(outDir, spec.out), figure.svg);
    rendered.push({ spec, rows: table.rows.length, caption: figure.caption });
  }
  fs.writeFileSync(path.join(outDir, "report.md"), summaryDocument(rendered));
  return rendered;
}

export function summaryDocument(rendered: Rendered[]): string {
  const lines: string[] = [
    "# Experiment figures",
    "",
    "| figure | kind | source CSV | rows |",
    "|---|---|---|---|",
  ];
  for (const r of rendered) {
    lines.push(`| ${r.spec.out} | ${r.spec.kind} | ${r.spec.csv} | ${r.rows} |`);
  }
  for (const r of rendered) {
    lines.push("", `## ${r.spec.out}`, "", `![${r.spec.kind}](${r.spec.out})`, "", r.caption);
  }
  lines.push("");
  return lines.join("\n");
}
