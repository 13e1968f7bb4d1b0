// Structural validation of explorer datasets with exact field paths.

import type { Candidate, Depiction, Edge, ExplorerDataset } from "./types.js";

export class SchemaError extends Error {
  constructor(public path: string, message: string) {
    super(`${path}: ${message}`);
    this.name = "SchemaError";
  }
}

function requireNumber(value: unknown, path: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new SchemaError(path, `expected a finite number, got ${JSON.stringify(value)}`);
  }
  return value;
}

function requireString(value: unknown, path: string): string {
  if (typeof value !== "string" || value.length === 0) {
    throw new SchemaError(path, "expected a non-empty string");
  }
  return value;
}

function validateDepiction(value: unknown, path: string): Depiction {
  if (typeof value !== "object" || value === null) {
    throw new SchemaError(path, "expected an object");
  }
  const dep = value as Record<string, unknown>;
  if (!Array.isArray(dep.atoms)) {
    throw new SchemaError(`${path}.atoms`, "expected an array");
  }
  if (!Array.isArray(dep.bonds)) {
    throw new SchemaError(`${path}.bonds`, "expected an array");
  }
  dep.atoms.forEach((atom, i) => {
    const a = atom as Record<string, unknown>;
    requireString(a.symbol, `${path}.atoms[${i}].symbol`);
    requireNumber(a.x, `${path}.atoms[${i}].x`);
    requireNumber(a.y, `${path}.atoms[${i}].y`);
  });
  dep.bonds.forEach((bond, i) => {
    const b = bond as Record<string, unknown>;
    const ai = requireNumber(b.a, `${path}.bonds[${i}].a`);
    const bi = requireNumber(b.b, `${path}.bonds[${i}].b`);
    if (ai < 0 || bi < 0 || ai >= dep.atoms.length || bi >= dep.atoms.length) {
      throw new SchemaError(`${path}.bonds[${i}]`, "bond endpoint out of range");
    }
  });
  return value as Depiction;
}

const CANDIDATE_NUMBERS: ReadonlyArray<keyof Candidate> = [
  "qed", "affinity", "selectivity", "sa", "logp", "mol_wt", "novelty", "toxic_count",
];

export function validateCandidate(value: unknown, path: string): Candidate {
  if (typeof value !== "object" || value === null) {
    throw new SchemaError(path, "expected an object");
  }
  const candidate = value as Record<string, unknown>;
  requireString(candidate.id, `${path}.id`);
  requireString(candidate.smiles, `${path}.smiles`);
  for (const field of CANDIDATE_NUMBERS) {
    requireNumber(candidate[field], `${path}.${String(field)}`);
  }
  if (candidate.docking_energy !== undefined && candidate.docking_energy !== null) {
    requireNumber(candidate.docking_energy, `${path}.docking_energy`);
  }
  validateDepiction(candidate.depiction, `${path}.depiction`);
  return value as Candidate;
}

export function validateDataset(value: unknown): ExplorerDataset {
  if (typeof value !== "object" || value === null) {
    throw new SchemaError("$", "expected a top-level object");
  }
  const dataset = value as Record<string, unknown>;
  if (!Array.isArray(dataset.candidates)) {
    throw new SchemaError("$.candidates", "expected an array");
  }
  if (!Array.isArray(dataset.edges)) {
    throw new SchemaError("$.edges", "expected an array");
  }
  const ids = new Set<string>();
  dataset.candidates.forEach((candidate, i) => {
    const validated = validateCandidate(candidate, `$.candidates[${i}]`);
    ids.add(validated.id);
  });
  dataset.edges.forEach((edge, i) => {
    const e = edge as Record<string, unknown>;
    const source = requireString(e.source, `$.edges[${i}].source`);
    const target = requireString(e.target, `$.edges[${i}].target`);
    const sim = requireNumber(e.similarity, `$.edges[${i}].similarity`);
    if (sim < 0 || sim > 1) {
      throw new SchemaError(`$.edges[${i}].similarity`, "must be within [0, 1]");
    }
    if (!ids.has(source) || !ids.has(target)) {
      throw new SchemaError(`$.edges[${i}]`, "edge endpoint references unknown candidate");
    }
  });
  return value as unknown as ExplorerDataset;
}

export function parseDataset(text: string): ExplorerDataset {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    throw new SchemaError("$", `invalid JSON: ${(err as Error).message}`);
  }
  return validateDataset(raw);
}

export interface Edge_ extends Edge {}
