// Fixed per-variant style map.  The four solver variants always render with
// the same color and dash pattern so figures from different runs stay
// comparable side by side; labels outside the map (sweep cells, ad-hoc
// traces) take colors from an ordered fallback palette by position.

export interface LineStyle {
  color: string;
  /** SVG stroke-dasharray, empty string for solid. */
  dash: string;
  width: number;
}

export const VARIANT_STYLES: Record<string, LineStyle> = {
  bda: { color: "#4477aa", dash: "", width: 1.6 },
  bdag: { color: "#66ccee", dash: "6,3", width: 1.6 },
  b3da: { color: "#228833", dash: "2,2", width: 1.6 },
  fbda: { color: "#aa3377", dash: "", width: 2.2 },
};

export const FALLBACK_PALETTE = [
  "#4477aa",
  "#ee6677",
  "#228833",
  "#ccbb44",
  "#66ccee",
  "#aa3377",
];

export function styleFor(label: string, index: number): LineStyle {
  const fixed = VARIANT_STYLES[label];
  if (fixed !== undefined) {
    return fixed;
  }
  const color = FALLBACK_PALETTE[index % FALLBACK_PALETTE.length] ?? "#000000";
  return { color, dash: "", width: 1.6 };
}
