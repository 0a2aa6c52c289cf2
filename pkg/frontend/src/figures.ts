/**
 * One renderer per experiment CSV.
 *
 * These plot what the CSV contains and nothing else: slopes, targets, and
 * quality numbers all come out of columns written by the producer.  The
 * only arithmetic here is axis mapping.
 */

import { Table, numbers, requireColumns, strings, uniformNumber, CsvError } from "./csv.js";
import * as svg from "./svg.js";

export interface Figure {
  svg: string;
  caption: string;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function seriesColor(i: number): string {
  return PALETTE[i % PALETTE.length] as string;
}

function groupBy(keys: string[]): Map<string, number[]> {
  const out = new Map<string, number[]>();
  keys.forEach((k, i) => {
    const slot = out.get(k);
    if (slot) slot.push(i);
    else out.set(k, [i]);
  });
  return out;
}

/** Sup-norm distance to the limit density against the diffusive scale. */
export function lltErrorFigure(table: Table): Figure {
  requireColumns(table, ["mode", "n", "sup_error"]);
  const n = numbers(table, "n");
  const err = numbers(table, "sup_error");
  const mode = strings(table, "mode");
  const f = svg.frame(n, err, {
    xLog: true,
    yLog: true,
    title: "Local-limit sup error vs scale",
    xLabel: "n (diffusive scale)",
    yLabel: "sup error",
  });
  const finals: string[] = [];
  let si = 0;
  for (const [name, idx] of groupBy(mode)) {
    const color = seriesColor(si++);
    const xs = idx.map((i) => n[i] as number);
    const ys = idx.map((i) => err[i] as number);
    const stroke = `stroke="${color}" stroke-width="2"`;
    f.parts.push(svg.polyline(xs, ys, f.x, f.y, stroke));
    f.parts.push(svg.circles(xs, ys, f.x, f.y, `fill="${color}"`));
    const last = idx[idx.length - 1] as number;
    finals.push(`${name}: E(${svg.fmt(n[last] as number)}) = ${svg.fmt(err[last] as number)}`);
  }
  if (groupBy(mode).size > 1) {
    svg.legend(f.parts, [...groupBy(mode).keys()].map((name, i) => [
      `stroke="${seriesColor(i)}" stroke-width="2"`, name,
    ]));
  }
  return {
    svg: svg.document(f.parts),
    caption:
      `Sup distance between the rescaled kernel and its limit density, ` +
      `log-log in the diffusive scale n.  Final values — ${finals.join("; ")}.`,
  };
}

/** On-diagonal decay per environment with the fitted power as a guide line. */
export function diagBoundsFigure(table: Table): Figure {
  requireColumns(table, ["env_id", "mode", "t", "value", "fitted_exponent", "near_constant"]);
  const t = numbers(table, "t");
  const value = numbers(table, "value");
  const mode = strings(table, "mode");
  const envId = strings(table, "env_id");
  const fitted = numbers(table, "fitted_exponent");
  const near = numbers(table, "near_constant");
  const f = svg.frame(t, value, {
    xLog: true,
    yLog: true,
    title: "On-diagonal kernel decay",
    xLabel: "t",
    yLabel: "p(t, x, x)",
  });
  const modeOrder = [...groupBy(mode).keys()];
  const byExp = new Map<string, number[]>();
  const seriesKeys = mode.map((m, i) => `${m}#${envId[i]}`);
  for (const [key, idx] of groupBy(seriesKeys)) {
    const m = key.split("#")[0] as string;
    const color = seriesColor(modeOrder.indexOf(m));
    const xs = idx.map((i) => t[i] as number);
    const ys = idx.map((i) => value[i] as number);
    f.parts.push(svg.polyline(xs, ys, f.x, f.y, `stroke="${color}" stroke-width="1.5" opacity="0.8"`));
    f.parts.push(svg.circles(xs, ys, f.x, f.y, `fill="${color}"`, 2.5));
    // guide with the producer's fitted slope, anchored at the first point
    const slope = fitted[idx[0] as number] as number;
    const x0 = xs[0] as number;
    const y0 = ys[0] as number;
    const x1 = xs[xs.length - 1] as number;
    const y1 = y0 * Math.pow(x1 / x0, slope);
    f.parts.push(svg.polyline([x0, x1], [y0, y1], f.x, f.y,
      `stroke="${color}" stroke-width="1" stroke-dasharray="5,4" opacity="0.6"`));
    const slot = byExp.get(m);
    if (slot) slot.push(slope);
    else byExp.set(m, [slope]);
  }
  svg.legend(f.parts, modeOrder.map((m, i) => [
    `stroke="${seriesColor(i)}" stroke-width="2"`, m,
  ]));
  const expText = [...byExp.entries()]
    .map(([m, slopes]) => {
      const lo = Math.min(...slopes);
      const hi = Math.max(...slopes);
      return `${m} fitted exponents in [${svg.fmt(lo)}, ${svg.fmt(hi)}]`;
    })
    .join("; ");
  const nearMin = Math.min(...near.filter((v) => Number.isFinite(v)));
  return {
    svg: svg.document(f.parts),
    caption:
      `On-diagonal decay per environment (dashed: the producer's fitted power ` +
      `through each first point).  ${expText}.  Near-diagonal floor >= ${svg.fmt(nearMin)}.`,
  };
}

/** Rescaled covariance against the continuum target line. */
export function covScalingFigure(table: Table): Figure {
  requireColumns(table, ["n", "cov_hs", "target"]);
  const n = numbers(table, "n");
  const hs = numbers(table, "cov_hs");
  const target = uniformNumber(table, "target");
  const mc = table.header.includes("cov_mc") ? numbers(table, "cov_mc") : null;
  const yAll = [...hs, target, ...(mc ?? [])];
  const f = svg.frame(n, yAll, {
    xLog: true,
    title: "Rescaled covariance vs continuum limit",
    xLabel: "n (diffusive scale)",
    yLabel: "n^(d-2) Cov",
  });
  const tY = svg.px(f.y(target));
  f.parts.push(
    `<line x1="${svg.MARGIN.left}" y1="${tY}" x2="${svg.WIDTH - svg.MARGIN.right}" y2="${tY}" ` +
      `stroke="#333333" stroke-width="1.5" stroke-dasharray="7,4"/>`,
  );
  f.parts.push(svg.polyline(n, hs, f.x, f.y, `stroke="${seriesColor(0)}" stroke-width="2"`));
  f.parts.push(svg.circles(n, hs, f.x, f.y, `fill="${seriesColor(0)}"`));
  const entries: [string, string][] = [
    [`stroke="${seriesColor(0)}" stroke-width="2"`, "kernel-integral route"],
    [`stroke="#333333" stroke-width="1.5" stroke-dasharray="7,4"`, "continuum target"],
  ];
  if (mc && mc.some((v) => Number.isFinite(v))) {
    f.parts.push(svg.circles(n, mc, f.x, f.y,
      `fill="#ffffff" stroke="${seriesColor(1)}" stroke-width="2"`, 4));
    entries.push([`stroke="${seriesColor(1)}" stroke-width="2"`, "sampled route"]);
  }
  svg.legend(f.parts, entries);
  const last = hs[hs.length - 1] as number;
  return {
    svg: svg.document(f.parts),
    caption:
      `Rescaled height covariance approaching its continuum value ` +
      `${svg.fmt(target)} (dashed); at the largest scale the curve sits at ` +
      `${svg.fmt(last)}.`,
  };
}

/** Laplace functional of the height pairing, one curve per scale. */
export function gffLaplaceFigure(table: Table): Figure {
  requireColumns(table, [
    "n", "lam", "laplace_estimate", "laplace_target", "r_squared",
    "pairing_variance", "limit_variance",
  ]);
  const n = numbers(table, "n");
  const lam = numbers(table, "lam");
  const est = numbers(table, "laplace_estimate");
  const tgt = numbers(table, "laplace_target");
  const r2 = numbers(table, "r_squared");
  const pv = numbers(table, "pairing_variance");
  const limitVar = uniformNumber(table, "limit_variance");
  const f = svg.frame(lam, [...est, ...tgt], {
    title: "Laplace functional of the height pairing",
    xLabel: "lambda",
    yLabel: "E exp(lambda phi(f_n))",
  });
  // limit curve from the target column, deduplicated across scales
  const targetByLam = new Map<number, number>();
  lam.forEach((x, i) => {
    const prev = targetByLam.get(x);
    const cur = tgt[i] as number;
    if (prev !== undefined && Math.abs(prev - cur) > 1e-12 * Math.max(1, Math.abs(prev))) {
      throw new CsvError(
        `${table.file}: laplace_target disagrees with itself at lam=${x}: ${prev} vs ${cur}`,
      );
    }
    targetByLam.set(x, cur);
  });
  const tLam = [...targetByLam.keys()].sort((a, b) => a - b);
  const tVal = tLam.map((x) => targetByLam.get(x) as number);
  f.parts.push(svg.polyline(tLam, tVal, f.x, f.y, `stroke="#333333" stroke-width="2"`));
  const entries: [string, string][] = [[`stroke="#333333" stroke-width="2"`, "limit law"]];
  const stats: string[] = [];
  let si = 0;
  for (const [key, idx] of groupBy(n.map((v) => String(v)))) {
    const color = seriesColor(si++);
    const order = [...idx].sort((a, b) => (lam[a] as number) - (lam[b] as number));
    const xs = order.map((i) => lam[i] as number);
    const ys = order.map((i) => est[i] as number);
    f.parts.push(svg.polyline(xs, ys, f.x, f.y, `stroke="${color}" stroke-width="1.5" opacity="0.9"`));
    f.parts.push(svg.circles(xs, ys, f.x, f.y, `fill="${color}"`, 3));
    entries.push([`stroke="${color}" stroke-width="1.5"`, `n = ${key}`]);
    const first = idx[0] as number;
    stats.push(
      `n=${key}: Var = ${svg.fmt(pv[first] as number)}, R^2 = ${svg.fmt(r2[first] as number)}`,
    );
  }
  svg.legend(f.parts, entries);
  return {
    svg: svg.document(f.parts),
    caption:
      `Sampled Laplace functional per scale against the limit law (black), ` +
      `limit variance ${svg.fmt(limitVar)}.  ${stats.join("; ")}.`,
  };
}
