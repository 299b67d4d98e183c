// Series extraction: trace rows -> the (x, y) curves each figure kind plots.
//
// Multi-view traces log one row per view at every inner step; objective
// values are per-view terms, so curves always sum ll_value / ul_value across
// views at the same (outer_idx, inner_idx) before plotting.

import { TraceError, TraceRow } from "./trace.js";

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

/**
 * Curve label derived from the trace filename, matching what the bench and
 * sweep commands write: trace_<variant>.csv and sweep_k1_<K1>_k2_<K2>.csv.
 * Anything else falls back to the basename.
 */
export function labelForPath(path: string): string {
  const base = (path.split("/").pop() ?? path).replace(/\.csv$/i, "");
  const trace = base.match(/^trace[_-](.+)$/);
  if (trace) {
    return trace[1] ?? base;
  }
  const sweep = base.match(/^sweep_k1_(\d+)_k2_(\d+)$/);
  if (sweep) {
    return `k1=${sweep[1]}, k2=${sweep[2]}`;
  }
  return base;
}

function sumByPosition(
  rows: TraceRow[],
  pick: (row: TraceRow) => number,
): Map<number, Map<number, number>> {
  const byOuter = new Map<number, Map<number, number>>();
  for (const row of rows) {
    let inner = byOuter.get(row.outer_idx);
    if (inner === undefined) {
      inner = new Map<number, number>();
      byOuter.set(row.outer_idx, inner);
    }
    inner.set(row.inner_idx, (inner.get(row.inner_idx) ?? 0) + pick(row));
  }
  return byOuter;
}

/**
 * Lower-level objective at every inner step of the first two outer
 * iterations, concatenated on a shared x axis.  Returns the divider position
 * between the two outer blocks (x of the first step of the second block,
 * minus a half step), or null when the trace only has one outer iteration.
 */
export function llInnerSeries(
  rows: TraceRow[],
  label: string,
  source: string,
): { series: Series; divider: number | null } {
  const byOuter = sumByPosition(rows, (row) => row.ll_value);
  const outers = [...byOuter.keys()].sort((a, b) => a - b).slice(0, 2);
  if (outers.length === 0) {
    throw new TraceError(`${source}: empty trace`);
  }
  const x: number[] = [];
  const y: number[] = [];
  let divider: number | null = null;
  for (const [block, outer] of outers.entries()) {
    const inner = byOuter.get(outer)!;
    const steps = [...inner.keys()].sort((a, b) => a - b);
    if (block === 1) {
      divider = x.length - 0.5;
    }
    for (const step of steps) {
      x.push(x.length);
      y.push(inner.get(step)!);
    }
  }
  return { series: { label, x, y }, divider };
}

/**
 * Upper-level objective at the last inner step of every outer iteration.
 * With a bound B the y values become the gap B - value ("UL Dval"), the
 * quantity the benchmark tables report.
 */
export function ulOuterSeries(
  rows: TraceRow[],
  label: string,
  source: string,
  bound: number | null,
): Series {
  const byOuter = sumByPosition(rows, (row) => row.ul_value);
  const outers = [...byOuter.keys()].sort((a, b) => a - b);
  if (outers.length === 0) {
    throw new TraceError(`${source}: empty trace`);
  }
  const x: number[] = [];
  const y: number[] = [];
  for (const outer of outers) {
    const inner = byOuter.get(outer)!;
    const last = Math.max(...inner.keys());
    const value = inner.get(last)!;
    x.push(outer);
    y.push(bound === null ? value : bound - value);
  }
  return { label, x, y };
}
