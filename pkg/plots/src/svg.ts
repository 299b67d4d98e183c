// Hand-built SVG line charts.  No chart library: the output is a plain
// string assembled from the data, so rendering the same curves twice yields
// byte-identical files.  All coordinates are rounded to 2 decimals to keep
// the determinism independent of printf quirks.

import { LineStyle } from "./style.js";
import { TraceError } from "./trace.js";

export interface Curve {
  label: string;
  x: number[];
  y: number[];
  style: LineStyle;
}

export interface Divider {
  x: number;
  label: string;
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  curves: Curve[];
  logY: boolean;
  dividers?: Divider[];
}

const WIDTH = 720;
const HEIGHT = 460;
const MARGIN = { left: 76, right: 18, top: 44, bottom: 54 };

function formatTick(value: number): string {
  if (Math.abs(value) < 1e-12) {
    return "0";
  }
  return String(parseFloat(value.toPrecision(10)));
}

function formatDecade(exp: number): string {
  if (exp >= -3 && exp <= 3) {
    return formatTick(Math.pow(10, exp));
  }
  return `1e${exp}`;
}

/** Tick positions at "nice" multiples of 1/2/5 covering [lo, hi]. */
function linearTicks(lo: number, hi: number): number[] {
  const span = hi - lo;
  const rawStep = span / 5;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const mult of [1, 2, 5, 10]) {
    if (mag * mult >= rawStep) {
      step = mag * mult;
      break;
    }
  }
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    ticks.push(v);
  }
  return ticks;
}

function escapeText(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function buildChart(opts: ChartOptions): string {
  // On a log axis, nonpositive values have no image; drop those points and
  // refuse a curve that loses everything rather than plot an empty line.
  const curves = opts.curves.map((curve) => {
    if (curve.x.length !== curve.y.length || curve.x.length === 0) {
      throw new TraceError(`series "${curve.label}" has no points`);
    }
    if (!opts.logY) {
      return curve;
    }
    const x: number[] = [];
    const y: number[] = [];
    for (let i = 0; i < curve.y.length; i++) {
      if ((curve.y[i] ?? 0) > 0) {
        x.push(curve.x[i] ?? 0);
        y.push(curve.y[i] ?? 0);
      }
    }
    if (y.length === 0) {
      throw new TraceError(
        `series "${curve.label}" has no positive values for a log axis`,
      );
    }
    return { ...curve, x, y };
  });

  const allX = curves.flatMap((c) => c.x);
  const allY = curves.flatMap((c) => (opts.logY ? c.y.map(Math.log10) : c.y));
  let x0 = Math.min(...allX);
  let x1 = Math.max(...allX);
  let y0 = Math.min(...allY);
  let y1 = Math.max(...allY);
  if (x1 === x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 === y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const xPad = (x1 - x0) * 0.02;
  const yPad = (y1 - y0) * 0.04;
  x0 -= xPad;
  x1 += xPad;
  y0 -= yPad;
  y1 += yPad;

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const sx = (x: number): string =>
    (MARGIN.left + ((x - x0) / (x1 - x0)) * plotW).toFixed(2);
  const syRaw = (y: number): number =>
    MARGIN.top + plotH - ((y - y0) / (y1 - y0)) * plotH;
  const sy = (y: number): string => syRaw(y).toFixed(2);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`);
  parts.push(
    `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="15" fill="#222222">` +
      `${escapeText(opts.title)}</text>`,
  );

  // y ticks: powers of 10 on a log axis, nice multiples otherwise.
  let yTicks: { pos: number; label: string }[];
  if (opts.logY) {
    const eLo = Math.ceil(y0 - 1e-9);
    const eHi = Math.floor(y1 + 1e-9);
    const stride = Math.max(1, Math.ceil((eHi - eLo + 1) / 8));
    yTicks = [];
    for (let e = eLo; e <= eHi; e += stride) {
      yTicks.push({ pos: e, label: formatDecade(e) });
    }
  } else {
    yTicks = linearTicks(y0, y1).map((v) => ({ pos: v, label: formatTick(v) }));
  }
  for (const tick of yTicks) {
    const py = sy(tick.pos);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${py}" x2="${WIDTH - MARGIN.right}" y2="${py}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${MARGIN.left - 6}" y="${(parseFloat(py) + 4).toFixed(2)}" ` +
        `text-anchor="end" font-size="11" fill="#444444">${tick.label}</text>`,
    );
  }

  for (const tick of linearTicks(x0, x1)) {
    const px = sx(tick);
    parts.push(
      `<line x1="${px}" y1="${MARGIN.top + plotH}" x2="${px}" ` +
        `y2="${MARGIN.top + plotH + 5}" stroke="#444444" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${px}" y="${MARGIN.top + plotH + 18}" text-anchor="middle" ` +
        `font-size="11" fill="#444444">${formatTick(tick)}</text>`,
    );
  }

  parts.push(
    `<line x1="${MARGIN.left}" y1="${MARGIN.top + plotH}" x2="${WIDTH - MARGIN.right}" ` +
      `y2="${MARGIN.top + plotH}" stroke="#222222" stroke-width="1"/>`,
  );
  parts.push(
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" ` +
      `y2="${MARGIN.top + plotH}" stroke="#222222" stroke-width="1"/>`,
  );
  parts.push(
    `<text x="${MARGIN.left + plotW / 2}" y="${HEIGHT - 14}" text-anchor="middle" ` +
      `font-size="12" fill="#222222">${escapeText(opts.xLabel)}</text>`,
  );
  parts.push(
    `<text x="20" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-size="12" ` +
      `fill="#222222" transform="rotate(-90 20 ${MARGIN.top + plotH / 2})">` +
      `${escapeText(opts.yLabel)}</text>`,
  );

  for (const divider of opts.dividers ?? []) {
    if (divider.x < x0 || divider.x > x1) {
      continue;
    }
    const px = sx(divider.x);
    parts.push(
      `<line x1="${px}" y1="${MARGIN.top}" x2="${px}" y2="${MARGIN.top + plotH}" ` +
        `stroke="#888888" stroke-width="1" stroke-dasharray="4,4"/>`,
    );
    parts.push(
      `<text x="${(parseFloat(px) + 4).toFixed(2)}" y="${MARGIN.top + 12}" ` +
        `font-size="10" fill="#666666">${escapeText(divider.label)}</text>`,
    );
  }

  for (const curve of curves) {
    const points = curve.x
      .map((x, i) => `${sx(x)},${sy(opts.logY ? Math.log10(curve.y[i] ?? 1) : curve.y[i] ?? 0)}`)
      .join(" ");
    const dash = curve.style.dash === "" ? "" : ` stroke-dasharray="${curve.style.dash}"`;
    parts.push(
      `<polyline class="curve" fill="none" stroke="${curve.style.color}" ` +
        `stroke-width="${curve.style.width}"${dash} points="${points}"/>`,
    );
  }

  const legendW = Math.max(...curves.map((c) => c.label.length)) * 7 + 40;
  const legendX = WIDTH - MARGIN.right - legendW - 6;
  const legendY = MARGIN.top + 6;
  parts.push(
    `<rect x="${legendX}" y="${legendY}" width="${legendW}" ` +
      `height="${curves.length * 16 + 10}" fill="#ffffff" fill-opacity="0.85" ` +
      `stroke="#bbbbbb" stroke-width="1"/>`,
  );
  for (const [i, curve] of curves.entries()) {
    const cy = legendY + 13 + i * 16;
    const dash = curve.style.dash === "" ? "" : ` stroke-dasharray="${curve.style.dash}"`;
    parts.push(
      `<line x1="${legendX + 6}" y1="${cy}" x2="${legendX + 28}" y2="${cy}" ` +
        `stroke="${curve.style.color}" stroke-width="${curve.style.width}"${dash}/>`,
    );
    parts.push(
      `<text x="${legendX + 34}" y="${cy + 4}" font-size="11" fill="#222222">` +
        `${escapeText(curve.label)}</text>`,
    );
  }

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
