// Command-line entry: plots <kind> --in a.csv[,b.csv...] --out fig.svg
//
// Everything is parsed and rendered before the output file is touched, so a
// bad trace never leaves an empty or truncated image behind.

import { readFileSync, writeFileSync } from "node:fs";
import { labelForPath, llInnerSeries, Series, ulOuterSeries } from "./figures.js";
import { styleFor } from "./style.js";
import { buildChart, Curve, Divider } from "./svg.js";
import { parseTrace, TraceError } from "./trace.js";

export const KINDS = ["ll_inner", "ul_outer", "sweep"] as const;
export type Kind = (typeof KINDS)[number];

export interface RenderRequest {
  kind: Kind;
  inputs: string[];
  out: string;
  log: boolean;
  bound: number | null;
}

export const USAGE = `usage: plots <kind> --in trace.csv[,trace.csv...] --out fig.svg [--log] [--bound F]

kinds:
  ll_inner   lower-level objective at every inner step of the first two
             outer iterations, one curve per input trace
  ul_outer   upper-level gap (bound - UL value) at the last inner step of
             every outer iteration, log y axis; requires --bound
  sweep      like ul_outer for per-cell sweep traces; plots the raw UL
             value unless --bound is given, linear y unless --log

options:
  --in FILES   comma-separated trace CSVs (repeatable)
  --out FILE   output image, .svg
  --bound F    upper bound on the UL objective (the ul_bound field of the
               run's summary.json); turns UL values into gaps
  --log        log-scale the y axis (always on for ul_outer)
`;

export class UsageError extends Error {}

export function parseArgs(argv: string[]): RenderRequest {
  let kind: Kind | null = null;
  const inputs: string[] = [];
  let out: string | null = null;
  let log = false;
  let bound: number | null = null;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i] ?? "";
    if (arg === "--in" || arg === "--out" || arg === "--bound") {
      const value = argv[++i];
      if (value === undefined) {
        throw new UsageError(`${arg} needs a value`);
      }
      if (arg === "--in") {
        inputs.push(...value.split(",").filter((p) => p.length > 0));
      } else if (arg === "--out") {
        out = value;
      } else {
        bound = Number(value);
        if (!Number.isFinite(bound)) {
          throw new UsageError(`--bound needs a number, got "${value}"`);
        }
      }
    } else if (arg === "--log") {
      log = true;
    } else if (arg.startsWith("-")) {
      throw new UsageError(`unknown option ${arg}`);
    } else if (kind === null) {
      if (!(KINDS as readonly string[]).includes(arg)) {
        throw new UsageError(`unknown kind "${arg}" (expected one of: ${KINDS.join(", ")})`);
      }
      kind = arg as Kind;
    } else {
      throw new UsageError(`unexpected argument ${arg}`);
    }
  }

  if (kind === null) {
    throw new UsageError("missing <kind>");
  }
  if (inputs.length === 0) {
    throw new UsageError("missing --in");
  }
  if (out === null) {
    throw new UsageError("missing --out");
  }
  if (!out.endsWith(".svg")) {
    throw new UsageError(`--out must end with .svg, got "${out}"`);
  }
  if (kind === "ul_outer" && bound === null) {
    throw new UsageError(
      "ul_outer needs --bound to turn UL values into gaps " +
        "(use the ul_bound field of the run's summary.json)",
    );
  }
  return { kind, inputs, out, log, bound };
}

export interface NamedText {
  source: string;
  text: string;
}

/** Render a figure from in-memory trace files; pure, no filesystem access. */
export function render(
  kind: Kind,
  files: NamedText[],
  log: boolean,
  bound: number | null,
): string {
  const curves: Curve[] = [];
  const dividerAt = new Set<number>();
  for (const [i, file] of files.entries()) {
    const rows = parseTrace(file.text, file.source);
    const label = labelForPath(file.source);
    const style = styleFor(label, i);
    let series: Series;
    if (kind === "ll_inner") {
      const out = llInnerSeries(rows, label, file.source);
      series = out.series;
      if (out.divider !== null) {
        dividerAt.add(out.divider);
      }
    } else {
      series = ulOuterSeries(rows, label, file.source, bound);
    }
    curves.push({ ...series, style });
  }

  const dividers: Divider[] = [...dividerAt]
    .sort((a, b) => a - b)
    .map((x) => ({ x, label: "UL iter 2" }));

  if (kind === "ll_inner") {
    return buildChart({
      title: "LL objective, first two UL iterations",
      xLabel: "inner step",
      yLabel: "LL objective",
      curves,
      logY: log,
      dividers,
    });
  }
  if (kind === "ul_outer") {
    return buildChart({
      title: "UL Dval per outer iteration",
      xLabel: "outer iteration",
      yLabel: "UL Dval",
      curves,
      logY: true,
    });
  }
  const gap = bound !== null;
  return buildChart({
    title: `UL ${gap ? "Dval" : "objective"} per outer iteration (K1, K2 sweep)`,
    xLabel: "outer iteration",
    yLabel: gap ? "UL Dval" : "UL objective",
    curves,
    logY: log,
  });
}

export function main(argv: string[]): number {
  let request: RenderRequest;
  try {
    request = parseArgs(argv);
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`plots: ${err.message}\n\n${USAGE}`);
      return 2;
    }
    throw err;
  }
  try {
    const files: NamedText[] = request.inputs.map((path) => {
      try {
        return { source: path, text: readFileSync(path, "utf8") };
      } catch {
        throw new TraceError(`${path}: cannot read file`);
      }
    });
    const svg = render(request.kind, files, request.log, request.bound);
    writeFileSync(request.out, svg);
  } catch (err) {
    if (err instanceof TraceError) {
      process.stderr.write(`plots: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
  return 0;
}
