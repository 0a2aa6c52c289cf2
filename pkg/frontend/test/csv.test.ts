import { describe, expect, it } from "vitest";

import { CsvError, numbers, parseCsv, requireColumns, strings, uniformNumber } from "../src/csv.js";

const SAMPLE = "a,b,c\n1,2.5,x\n3,nan,y\n";

describe("parseCsv", () => {
  it("parses header and rows", () => {
    const t = parseCsv(SAMPLE, "s.csv");
    expect(t.header).toEqual(["a", "b", "c"]);
    expect(t.rows).toHaveLength(2);
    expect(strings(t, "c")).toEqual(["x", "y"]);
  });

  it("rejects an empty file", () => {
    expect(() => parseCsv("", "e.csv")).toThrow(CsvError);
    expect(() => parseCsv("\n  \n", "e.csv")).toThrow(/empty/);
  });

  it("rejects a header-only file instead of plotting nothing", () => {
    expect(() => parseCsv("a,b,c\n", "h.csv")).toThrow(/no data rows/);
  });

  it("rejects ragged rows with the position", () => {
    expect(() => parseCsv("a,b\n1,2\n1,2,3\n", "r.csv")).toThrow(/row 3 has 3 cells/);
  });

  it("rejects unnamed header slots", () => {
    expect(() => parseCsv("a,,c\n1,2,3\n", "u.csv")).toThrow(/unnamed/);
  });
});

describe("requireColumns", () => {
  it("passes when everything needed is present", () => {
    const t = parseCsv(SAMPLE, "s.csv");
    expect(() => requireColumns(t, ["a", "c"])).not.toThrow();
  });

  it("reports the full column diff", () => {
    const t = parseCsv(SAMPLE, "s.csv");
    try {
      requireColumns(t, ["a", "missing_one", "missing_two"]);
      expect.unreachable("should have thrown");
    } catch (err) {
      const msg = (err as Error).message;
      expect(msg).toContain("schema mismatch");
      expect(msg).toContain("missing_one");
      expect(msg).toContain("missing_two");
      expect(msg).toContain("found [a, b, c]");
    }
  });
});

describe("numbers", () => {
  it("reads floats and passes nan through", () => {
    const t = parseCsv(SAMPLE, "s.csv");
    const b = numbers(t, "b");
    expect(b[0]).toBe(2.5);
    expect(Number.isNaN(b[1])).toBe(true);
  });

  it("names the exact cell on corruption", () => {
    const t = parseCsv("a,b\n1,2\n1,2;3\n", "c.csv");
    expect(() => numbers(t, "b")).toThrow(/row 3, column "b": "2;3"/);
  });

  it("rejects a missing column by name", () => {
    const t = parseCsv(SAMPLE, "s.csv");
    expect(() => numbers(t, "zzz")).toThrow(/no column named "zzz"/);
  });
});

describe("uniformNumber", () => {
  it("accepts a constant column", () => {
    const t = parseCsv("v\n3.5\n3.5\n", "k.csv");
    expect(uniformNumber(t, "v")).toBe(3.5);
  });

  it("rejects a drifting column", () => {
    const t = parseCsv("v\n3.5\n3.6\n", "k.csv");
    expect(() => uniformNumber(t, "v")).toThrow(/expected to be constant/);
  });
});
