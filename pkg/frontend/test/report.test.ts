import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { FIGURES, renderDirectory } from "../src/report.js";

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), "fixtures", "all");

const scratch: string[] = [];

function tmpdir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "rcmlab-report-"));
  scratch.push(dir);
  return dir;
}

afterEach(() => {
  while (scratch.length > 0) {
    fs.rmSync(scratch.pop() as string, { recursive: true, force: true });
  }
});

describe("renderDirectory", () => {
  it("renders all four known figures plus the summary", () => {
    const out = tmpdir();
    const rendered = renderDirectory(FIXTURES, out);
    expect(rendered.map((r) => r.spec.out)).toEqual([
      "llt-errors.svg", "diag-bounds.svg", "cov-scaling.svg", "gff-laplace.svg",
    ]);
    for (const r of rendered) {
      expect(fs.existsSync(path.join(out, r.spec.out))).toBe(true);
    }
    const summary = fs.readFileSync(path.join(out, "report.md"), "utf8");
    expect(summary).toContain("| llt-errors.svg |");
    expect(summary).toContain("| gff-laplace.svg |");
    expect(summary).toContain("covariance scaling vs target");
  });

  it("regenerates every output byte-identically", () => {
    const a = tmpdir();
    const b = tmpdir();
    renderDirectory(FIXTURES, a);
    renderDirectory(FIXTURES, b);
    const names = [...FIGURES.map((s) => s.out), "report.md"];
    for (const name of names) {
      const bytesA = fs.readFileSync(path.join(a, name));
      const bytesB = fs.readFileSync(path.join(b, name));
      expect(bytesA.equals(bytesB), `${name} differs between runs`).toBe(true);
    }
  });

  it("renders the subset of CSVs that exist", () => {
    const src = tmpdir();
    fs.copyFileSync(path.join(FIXTURES, "gl-gff.csv"), path.join(src, "gl-gff.csv"));
    const out = tmpdir();
    const rendered = renderDirectory(src, out);
    expect(rendered).toHaveLength(1);
    expect(fs.readdirSync(out).sort()).toEqual(["gff-laplace.svg", "report.md"]);
  });

  it("errors when no known CSV is present", () => {
    const src = tmpdir();
    expect(() => renderDirectory(src, tmpdir())).toThrow(/none of the known experiment CSVs/);
  });

  it("does not leave a figure behind for a corrupted CSV", () => {
    const src = tmpdir();
    const raw = fs.readFileSync(path.join(FIXTURES, "llt-quenched.csv"), "utf8");
    fs.writeFileSync(path.join(src, "llt-quenched.csv"), raw.replace("sup_error", "sup_errox"));
    const out = tmpdir();
    expect(() => renderDirectory(src, out)).toThrow(/missing column/);
    expect(fs.existsSync(path.join(out, "llt-errors.svg"))).toBe(false);
  });
});

describe("cli main", () => {
  it("runs end to end and reports what it wrote", () => {
    const out = tmpdir();
    expect(main(["--in", FIXTURES, "--out", out])).toBe(0);
    expect(fs.readdirSync(out).sort()).toEqual([
      "cov-scaling.svg", "diag-bounds.svg", "gff-laplace.svg",
      "llt-errors.svg", "report.md",
    ]);
  });

  it("exits 2 on usage errors", () => {
    expect(main(["--in", FIXTURES])).toBe(2);
    expect(main(["--frobnicate"])).toBe(2);
  });

  it("exits 2, not a crash, on a deliberately corrupted CSV", () => {
    const src = tmpdir();
    const raw = fs.readFileSync(path.join(FIXTURES, "gl-scaling.csv"), "utf8");
    // chop the tail off a data row: ragged line
    fs.writeFileSync(path.join(src, "gl-scaling.csv"), raw.replace(/,[^,\n]*\n$/, "\n"));
    expect(main(["--in", src, "--out", tmpdir()])).toBe(2);
  });

  it("prints usage on --help", () => {
    expect(main(["--help"])).toBe(0);
  });
});
