// Conjunctive range filtering over candidate properties.
//
// Bounds are strict on both sides, mirroring the pipeline's screening rules
// (e.g. drug-likeness must be strictly greater than its floor), so a filter
// configured with the screening thresholds selects exactly the candidates
// the CLI marks as passing.

import type { Candidate, NumericProperty } from "./types.js";

export interface RangeFilter {
  property: NumericProperty;
  gt?: number; // keep values strictly greater
  lt?: number; // keep values strictly smaller
}

export interface FilterWarning {
  property: string;
  message: string;
}

export interface FilterResult {
  visible: Candidate[];
  warnings: FilterWarning[];
}

export function candidateValue(candidate: Candidate, property: NumericProperty): number | null {
  const value = candidate[property];
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}

export function filterView(candidates: Candidate[], filters: RangeFilter[]): FilterResult {
  const warnings: FilterWarning[] = [];
  for (const filter of filters) {
    if (filter.gt !== undefined && filter.lt !== undefined && filter.gt >= filter.lt) {
      warnings.push({
        property: filter.property,
        message: `empty range: requires > ${filter.gt} and < ${filter.lt}`,
      });
    }
  }
  const visible = candidates.filter((candidate) =>
    filters.every((filter) => {
      const value = candidateValue(candidate, filter.property);
      if (value === null) {
        // missing optional values (e.g. docking energy) fail active filters
        return filter.gt === undefined && filter.lt === undefined;
      }
      if (filter.gt !== undefined && !(value > filter.gt)) return false;
      if (filter.lt !== undefined && !(value < filter.lt)) return false;
      return true;
    }),
  );
  return { visible, warnings };
}

/** Range filters equivalent to the CLI screening thresholds. */
export function screeningFilters(config: {
  min_pic50?: number;
  min_qed?: number;
  max_sa?: number;
  max_toxic_endpoints?: number;
  max_logp?: number;
  max_mol_wt?: number;
  min_selectivity?: number;
}): RangeFilter[] {
  const filters: RangeFilter[] = [];
  if (config.min_pic50 !== undefined) filters.push({ property: "affinity", gt: config.min_pic50 });
  if (config.min_qed !== undefined) filters.push({ property: "qed", gt: config.min_qed });
  if (config.max_sa !== undefined) filters.push({ property: "sa", lt: config.max_sa });
  if (config.max_toxic_endpoints !== undefined) {
    filters.push({ property: "toxic_count", lt: config.max_toxic_endpoints });
  }
  if (config.max_logp !== undefined) filters.push({ property: "logp", lt: config.max_logp });
  if (config.max_mol_wt !== undefined) filters.push({ property: "mol_wt", lt: config.max_mol_wt });
  if (config.min_selectivity !== undefined) {
    filters.push({ property: "selectivity", gt: config.min_selectivity });
  }
  return filters;
}
