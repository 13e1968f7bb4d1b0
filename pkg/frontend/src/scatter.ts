// Pure scatter-plot view model and SVG renderer. Rendering is a function of
// (visible candidates, axis choice, selection) and nothing else, so a reload
// with the same state reproduces the identical view.

import type { Candidate, NumericProperty } from "./types.js";
import { candidateValue } from "./filters.js";

export interface ScatterPoint {
  id: string;
  x: number;
  y: number;
  px: number; // pixel coordinates
  py: number;
  selected: boolean;
  pass: boolean | null;
}

export interface ScatterViewModel {
  points: ScatterPoint[];
  xLabel: string;
  yLabel: string;
  xDomain: [number, number];
  yDomain: [number, number];
  width: number;
  height: number;
}

export const AXIS_LABELS: Record<string, string> = {
  qed: "drug-likeness (QED)",
  affinity: "target affinity (pIC50)",
  selectivity: "off-target selectivity",
  sa: "synthetic accessibility",
  logp: "logP",
  mol_wt: "molecular weight",
  novelty: "novelty",
  toxic_count: "toxic endpoints",
  docking_energy: "docking energy (kcal/mol)",
};

const MARGIN = 40;

function domain(values: number[]): [number, number] {
  if (values.length === 0) return [0, 1];
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

export function scatterViewModel(
  candidates: Candidate[],
  xProp: NumericProperty,
  yProp: NumericProperty,
  selectedId: string | null = null,
  width = 560,
  height = 420,
): ScatterViewModel {
  const usable = candidates.filter(
    (c) => candidateValue(c, xProp) !== null && candidateValue(c, yProp) !== null,
  );
  const xs = usable.map((c) => candidateValue(c, xProp) as number);
  const ys = usable.map((c) => candidateValue(c, yProp) as number);
  const xDomain = domain(xs);
  const yDomain = domain(ys);
  const sx = (v: number) =>
    MARGIN + ((v - xDomain[0]) / (xDomain[1] - xDomain[0])) * (width - 2 * MARGIN);
  const sy = (v: number) =>
    height - MARGIN - ((v - yDomain[0]) / (yDomain[1] - yDomain[0])) * (height - 2 * MARGIN);
  const points = usable.map((c, i) => ({
    id: c.id,
    x: xs[i],
    y: ys[i],
    px: sx(xs[i]),
    py: sy(ys[i]),
    selected: c.id === selectedId,
    pass: c.verdict ?? null,
  }));
  return {
    points,
    xLabel: AXIS_LABELS[xProp] ?? xProp,
    yLabel: AXIS_LABELS[yProp] ?? yProp,
    xDomain,
    yDomain,
    width,
    height,
  };
}

export function scatterSvg(vm: ScatterViewModel): string {
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${vm.width}" height="${vm.height}" ` +
      `viewBox="0 0 ${vm.width} ${vm.height}" role="img" aria-label="scatter plot">`,
  );
  parts.push(
    `<line x1="${MARGIN}" y1="${vm.height - MARGIN}" x2="${vm.width - MARGIN}" ` +
      `y2="${vm.height - MARGIN}" stroke="#888"/>`,
    `<line x1="${MARGIN}" y1="${MARGIN}" x2="${MARGIN}" y2="${vm.height - MARGIN}" stroke="#888"/>`,
    `<text x="${vm.width / 2}" y="${vm.height - 8}" text-anchor="middle" font-size="12">${vm.xLabel}</text>`,
    `<text x="14" y="${vm.height / 2}" text-anchor="middle" font-size="12" ` +
      `transform="rotate(-90 14 ${vm.height / 2})">${vm.yLabel}</text>`,
  );
  for (const point of vm.points) {
    const fill = point.selected ? "#e05a00" : point.pass === false ? "#b0b8c8" : "#2a6fb0";
    const r = point.selected ? 6 : 3.5;
    parts.push(
      `<circle class="pt" data-id="${point.id}" cx="${point.px.toFixed(2)}" ` +
        `cy="${point.py.toFixed(2)}" r="${r}" fill="${fill}" fill-opacity="0.85"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
