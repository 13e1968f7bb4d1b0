// Data model for the explorer dataset exported by the pipeline CLI.

export interface DepictionAtom {
  symbol: string;
  charge?: number;
  aromatic?: boolean;
  x: number;
  y: number;
}

export interface DepictionBond {
  a: number;
  b: number;
  order: number;
  aromatic?: boolean;
}

export interface Depiction {
  atoms: DepictionAtom[];
  bonds: DepictionBond[];
}

export interface Candidate {
  id: string;
  smiles: string;
  target_id?: string | null;
  qed: number;
  affinity: number;
  selectivity: number;
  sa: number;
  logp: number;
  mol_wt: number;
  novelty: number;
  toxic_count: number;
  docking_energy?: number | null;
  verdict?: boolean | null;
  reasons?: string[];
  depiction: Depiction;
}

export interface Edge {
  source: string;
  target: string;
  similarity: number;
}

export interface ExplorerDataset {
  candidates: Candidate[];
  edges: Edge[];
}

/** Numeric properties the UI can filter and plot on. The "solubility"
 * control in the original tool is logP here: the pipeline computes logP and
 * no separate solubility value, so the axis is labeled accordingly. */
export const NUMERIC_PROPERTIES = [
  "qed",
  "affinity",
  "selectivity",
  "sa",
  "logp",
  "mol_wt",
  "novelty",
  "toxic_count",
  "docking_energy",
] as const;

export type NumericProperty = (typeof NUMERIC_PROPERTIES)[number];
