// Trace CSV parsing.
//
// A trace file is the per-inner-step log written by `rblo run` / `rblo bench`
// / `rblo sweep`.  The header is fixed: seven base columns, plus a trailing
// `view` column when the instance has more than one view.  Anything else is a
// schema mismatch and gets rejected with the offending column named, so a
// stale or hand-edited file fails loudly instead of producing a wrong figure.

export const BASE_COLUMNS = [
  "outer_idx",
  "inner_idx",
  "phase",
  "s_u_k",
  "s_l_k",
  "ll_value",
  "ul_value",
] as const;

export interface TraceRow {
  outer_idx: number;
  inner_idx: number;
  phase: string;
  s_u_k: number;
  s_l_k: number;
  ll_value: number;
  ul_value: number;
  /** View index, or null for single-view traces without the column. */
  view: number | null;
}

/** Raised for anything wrong with a trace file's shape or contents. */
export class TraceError extends Error {}

const NUMERIC_COLUMNS = new Set([
  "outer_idx",
  "inner_idx",
  "s_u_k",
  "s_l_k",
  "ll_value",
  "ul_value",
  "view",
]);

function parseCell(raw: string, column: string, source: string, lineNo: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new TraceError(
      `${source}: line ${lineNo}: non-numeric value "${raw}" in column "${column}"`,
    );
  }
  return value;
}

export function parseTrace(text: string, source: string): TraceRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new TraceError(`${source}: empty trace`);
  }
  const header = (lines[0] ?? "").split(",");
  for (const column of BASE_COLUMNS) {
    if (!header.includes(column)) {
      throw new TraceError(`${source}: missing column "${column}"`);
    }
  }
  for (const column of header) {
    if (!(BASE_COLUMNS as readonly string[]).includes(column) && column !== "view") {
      throw new TraceError(`${source}: unexpected column "${column}"`);
    }
  }
  if (new Set(header).size !== header.length) {
    const dup = header.find((c, i) => header.indexOf(c) !== i);
    throw new TraceError(`${source}: duplicate column "${dup}"`);
  }
  if (lines.length === 1) {
    throw new TraceError(`${source}: empty trace`);
  }

  const rows: TraceRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = (lines[i] ?? "").split(",");
    if (cells.length !== header.length) {
      throw new TraceError(
        `${source}: line ${i + 1}: expected ${header.length} cells, got ${cells.length}`,
      );
    }
    const record: Record<string, number | string | null> = { view: null };
    for (let j = 0; j < header.length; j++) {
      const column = header[j] ?? "";
      const raw = cells[j] ?? "";
      record[column] = NUMERIC_COLUMNS.has(column)
        ? parseCell(raw, column, source, i + 1)
        : raw;
    }
    rows.push(record as unknown as TraceRow);
  }
  return rows;
}
