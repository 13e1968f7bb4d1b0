// Detail panel view model: properties plus nearest neighbors by similarity.

import type { Candidate, Edge, ExplorerDataset } from "./types.js";

export interface NeighborView {
  candidate: Candidate;
  similarity: number;
}

export interface DetailView {
  candidate: Candidate;
  properties: Array<[string, string]>;
  neighbors: NeighborView[];
}

const PROPERTY_ROWS: Array<[string, (c: Candidate) => string]> = [
  ["SMILES", (c) => c.smiles],
  ["drug-likeness (QED)", (c) => c.qed.toFixed(3)],
  ["target affinity (pIC50)", (c) => c.affinity.toFixed(2)],
  ["selectivity", (c) => c.selectivity.toFixed(2)],
  ["synthetic accessibility", (c) => c.sa.toFixed(2)],
  ["logP", (c) => c.logp.toFixed(2)],
  ["molecular weight", (c) => c.mol_wt.toFixed(1)],
  ["novelty", (c) => c.novelty.toFixed(3)],
  ["toxic endpoints", (c) => String(c.toxic_count)],
  ["docking energy", (c) =>
    c.docking_energy === null || c.docking_energy === undefined
      ? "n/a"
      : `${c.docking_energy.toFixed(1)} kcal/mol`],
  ["screening verdict", (c) =>
    c.verdict === null || c.verdict === undefined
      ? "n/a"
      : c.verdict
        ? "pass"
        : `fail (${(c.reasons ?? []).join(", ") || "no reasons"})`],
];

export function detailView(dataset: ExplorerDataset, id: string): DetailView | null {
  const candidate = dataset.candidates.find((c) => c.id === id);
  if (!candidate) return null;
  const byId = new Map(dataset.candidates.map((c) => [c.id, c]));
  const neighbors = dataset.edges
    .filter((e: Edge) => e.source === id && byId.has(e.target))
    .sort((a, b) => b.similarity - a.similarity || a.target.localeCompare(b.target))
    .slice(0, 5)
    .map((e) => ({ candidate: byId.get(e.target) as Candidate, similarity: e.similarity }));
  return {
    candidate,
    properties: PROPERTY_ROWS.map(([label, fn]) => [label, fn(candidate)]),
    neighbors,
  };
}
