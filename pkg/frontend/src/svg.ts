/**
 * String-built SVG figures.
 *
 * Everything is a pure function of the data: fixed canvas, fixed fonts,
 * fixed formatting, no dates, no randomness — rendering the same table
 * twice must give the same bytes.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { top: 40, right: 24, bottom: 56, left: 76 };
const FONT = "font-family=\"Helvetica, Arial, sans-serif\"";

export interface Scale {
  (value: number): number;
  ticks: number[];
  log: boolean;
}

/** Fixed-precision coordinate so float noise can't wiggle the bytes. */
export function px(v: number): string {
  return v.toFixed(2);
}

/** Stable data-value formatter for tick and annotation labels. */
export function fmt(v: number): string {
  if (v === 0) return "0";
  if (Number.isNaN(v)) return "nan";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    return v.toExponential(1).replace("e+", "e").replace(/e(-?)0*(\d)/, "e$1$2");
  }
  const s = v.toPrecision(4);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

function logTicks(lo: number, hi: number): number[] {
  // densify mantissas until the axis carries at least three labels
  const k0 = Math.floor(Math.log10(lo)) - 1;
  const k1 = Math.ceil(Math.log10(hi));
  for (const mantissas of [[1], [1, 2, 5], [1, 2, 3, 4, 5, 6, 7, 8, 9]]) {
    const out: number[] = [];
    for (let k = k0; k <= k1; k++) {
      for (const m of mantissas) {
        const v = m * Math.pow(10, k);
        if (v >= lo * (1 - 1e-9) && v <= hi * (1 + 1e-9)) out.push(v);
      }
    }
    if (out.length >= 3) return out.sort((a, b) => a - b);
  }
  // range inside a single mantissa gap: plain linear labels read best
  return linTicks(lo, hi);
}

function linTicks(lo: number, hi: number): number[] {
  const span = hi - lo;
  const raw = span / 5;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => span / s <= 5.5) as number;
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

export function scale(
  values: number[],
  range: [number, number],
  opts: { log?: boolean; pad?: number } = {},
): Scale {
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) {
    throw new Error("no finite values to build an axis from");
  }
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  const log = opts.log ?? false;
  if (log && lo <= 0) {
    throw new Error(`log axis needs positive values, got ${lo}`);
  }
  const pad = opts.pad ?? 0.06;
  if (log) {
    const f = Math.pow(hi / lo, pad) || 1;
    lo /= f === 1 && hi === lo ? 2 : f;
    hi *= f === 1 && hi === lo ? 2 : f;
  } else {
    const span = hi - lo || Math.abs(hi) || 1;
    lo -= span * pad;
    hi += span * pad;
  }
  const [r0, r1] = range;
  const s = ((value: number): number => {
    const t = log
      ? (Math.log(value) - Math.log(lo)) / (Math.log(hi) - Math.log(lo))
      : (value - lo) / (hi - lo);
    return r0 + t * (r1 - r0);
  }) as Scale;
  s.ticks = log ? logTicks(lo, hi) : linTicks(lo, hi);
  s.log = log;
  return s;
}

export function polyline(
  xs: number[],
  ys: number[],
  x: Scale,
  y: Scale,
  style: string,
): string {
  const pts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    const xv = xs[i] as number;
    const yv = ys[i] as number;
    if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
    pts.push(`${px(x(xv))},${px(y(yv))}`);
  }
  return `<polyline fill="none" ${style} points="${pts.join(" ")}"/>`;
}

export function circles(
  xs: number[],
  ys: number[],
  x: Scale,
  y: Scale,
  style: string,
  r = 3.5,
): string {
  const out: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    const xv = xs[i] as number;
    const yv = ys[i] as number;
    if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
    out.push(`<circle cx="${px(x(xv))}" cy="${px(y(yv))}" r="${r}" ${style}/>`);
  }
  return out.join("");
}

export interface Frame {
  x: Scale;
  y: Scale;
  parts: string[];
}

export function frame(
  xValues: number[],
  yValues: number[],
  opts: { xLog?: boolean; yLog?: boolean; title: string; xLabel: string; yLabel: string },
): Frame {
  const x = scale(xValues, [MARGIN.left, WIDTH - MARGIN.right], { log: opts.xLog });
  const y = scale(yValues, [HEIGHT - MARGIN.bottom, MARGIN.top], { log: opts.yLog });
  const parts: string[] = [];
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  for (const t of x.ticks) {
    const gx = px(x(t));
    parts.push(`<line x1="${gx}" y1="${y0}" x2="${gx}" y2="${y1}" stroke="#dddddd" stroke-width="1"/>`);
    parts.push(`<text x="${gx}" y="${y0 + 18}" ${FONT} font-size="12" fill="#333333" text-anchor="middle">${fmt(t)}</text>`);
  }
  for (const t of y.ticks) {
    const gy = px(y(t));
    parts.push(`<line x1="${x0}" y1="${gy}" x2="${x1}" y2="${gy}" stroke="#dddddd" stroke-width="1"/>`);
    parts.push(`<text x="${x0 - 8}" y="${gy}" ${FONT} font-size="12" fill="#333333" text-anchor="end" dominant-baseline="middle">${fmt(t)}</text>`);
  }
  parts.push(`<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#333333" stroke-width="1"/>`);
  parts.push(`<text x="${(x0 + x1) / 2}" y="24" ${FONT} font-size="15" fill="#111111" text-anchor="middle">${opts.title}</text>`);
  parts.push(`<text x="${(x0 + x1) / 2}" y="${HEIGHT - 14}" ${FONT} font-size="13" fill="#333333" text-anchor="middle">${opts.xLabel}</text>`);
  parts.push(`<text x="20" y="${(y0 + y1) / 2}" ${FONT} font-size="13" fill="#333333" text-anchor="middle" transform="rotate(-90 20 ${(y0 + y1) / 2})">${opts.yLabel}</text>`);
  return { x, y, parts };
}

export function legend(frameParts: string[], entries: [string, string][]): void {
  let yPos = MARGIN.top + 16;
  for (const [style, label] of entries) {
    const xa = WIDTH - MARGIN.right - 150;
    frameParts.push(`<line x1="${xa}" y1="${yPos - 4}" x2="${xa + 26}" y2="${yPos - 4}" ${style}/>`);
    frameParts.push(`<text x="${xa + 32}" y="${yPos}" ${FONT} font-size="12" fill="#333333">${label}</text>`);
    yPos += 18;
  }
}

export function document(parts: string[]): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">` +
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>` +
    parts.join("") +
    `</svg>\n`
  );
}
