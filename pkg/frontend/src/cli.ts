#!/usr/bin/env node
/** rcmlab-report --in <dir> --out <dir> */

import { CsvError } from "./csv.js";
import { renderDirectory } from "./report.js";

const USAGE = "usage: rcmlab-report --in <experiment output dir> --out <figure dir>";

export function main(argv: string[]): number {
  let inDir: string | undefined;
  let outDir: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--in") inDir = argv[++i];
    else if (arg === "--out") outDir = argv[++i];
    else if (arg === "--help" || arg === "-h") {
      console.log(USAGE);
      return 0;
    } else {
      console.error(`error: unknown argument "${arg}"\n${USAGE}`);
      return 2;
    }
  }
  if (!inDir || !outDir) {
    console.error(`error: both --in and --out are required\n${USAGE}`);
    return 2;
  }
  try {
    const rendered = renderDirectory(inDir, outDir);
    for (const r of rendered) {
      console.log(`wrote ${r.spec.out} from ${r.spec.csv} (${r.rows} rows)`);
    }
    console.log(`wrote report.md (${rendered.length} figures) in ${outDir}`);
    return 0;
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
