// DOM wiring for the explorer: load a dataset file, filter, plot, inspect.
// All state lives in one AppState; every mutation re-renders from scratch.

import { depictionSvg } from "./depiction.js";
import { filterView, RangeFilter } from "./filters.js";
import { detailView } from "./detail.js";
import { scatterSvg, scatterViewModel } from "./scatter.js";
import { NUMERIC_PROPERTIES, NumericProperty, ExplorerDataset } from "./types.js";
import { parseDataset, SchemaError } from "./validate.js";

interface AppState {
  dataset: ExplorerDataset | null;
  filters: Map<NumericProperty, { gt?: number; lt?: number }>;
  xProp: NumericProperty;
  yProp: NumericProperty;
  selectedId: string | null;
  error: string | null;
}

const state: AppState = {
  dataset: null,
  filters: new Map(),
  xProp: "affinity",
  yProp: "qed",
  selectedId: null,
  error: null,
};

function activeFilters(): RangeFilter[] {
  const filters: RangeFilter[] = [];
  for (const [property, bounds] of state.filters) {
    if (bounds.gt !== undefined || bounds.lt !== undefined) {
      filters.push({ property, ...bounds });
    }
  }
  return filters;
}

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

export function render(): void {
  const errorPanel = byId("error-panel");
  if (state.error) {
    errorPanel.textContent = state.error;
    errorPanel.style.display = "block";
  } else {
    errorPanel.style.display = "none";
  }
  const empty = byId("empty-state");
  const main = byId("main-view");
  if (!state.dataset || state.dataset.candidates.length === 0) {
    empty.style.display = "block";
    main.style.display = "none";
    return;
  }
  empty.style.display = "none";
  main.style.display = "grid";

  const { visible, warnings } = filterView(state.dataset.candidates, activeFilters());
  byId("filter-warnings").textContent = warnings
    .map((w) => `${w.property}: ${w.message}`)
    .join(" | ");
  byId("count-line").textContent =
    `${visible.length} of ${state.dataset.candidates.length} molecules visible`;

  const vm = scatterViewModel(visible, state.xProp, state.yProp, state.selectedId);
  byId("scatter-host").innerHTML = scatterSvg(vm);
  for (const circle of byId("scatter-host").querySelectorAll<SVGCircleElement>("circle.pt")) {
    circle.addEventListener("click", () => {
      state.selectedId = circle.dataset.id ?? null;
      render();
    });
  }

  const listHost = byId("molecule-list");
  listHost.innerHTML = "";
  for (const candidate of visible.slice(0, 200)) {
    const row = document.createElement("div");
    row.className = "mol-row" + (candidate.id === state.selectedId ? " selected" : "");
    row.textContent = `${candidate.id}  qed ${candidate.qed.toFixed(2)}  `
      + `aff ${candidate.affinity.toFixed(2)}  tox ${candidate.toxic_count}`;
    row.addEventListener("click", () => {
      state.selectedId = candidate.id;
      render();
    });
    listHost.appendChild(row);
  }

  const detailHost = byId("detail-panel");
  if (state.selectedId && state.dataset) {
    const view = detailView(state.dataset, state.selectedId);
    if (view) {
      const rows = view.properties
        .map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`)
        .join("");
      const neighbors = view.neighbors
        .map(
          (n) =>
            `<li data-id="${n.candidate.id}" class="neighbor">` +
            `${n.candidate.id} (similarity ${n.similarity.toFixed(3)})` +
            `<div class="neighbor-svg">${depictionSvg(n.candidate.depiction, 90)}</div></li>`,
        )
        .join("");
      detailHost.innerHTML =
        `<h3>${view.candidate.id}</h3>` +
        depictionSvg(view.candidate.depiction) +
        `<table>${rows}</table>` +
        `<h4>related molecules</h4><ul>${neighbors}</ul>`;
      for (const item of detailHost.querySelectorAll<HTMLElement>("li.neighbor")) {
        item.addEventListener("click", () => {
          state.selectedId = item.dataset.id ?? null;
          render();
        });
      }
    }
  } else {
    detailHost.innerHTML = "<em>select a molecule</em>";
  }
}

function buildFilterControls(): void {
  const host = byId("filter-controls");
  host.innerHTML = "";
  for (const property of NUMERIC_PROPERTIES) {
    const row = document.createElement("div");
    row.className = "filter-row";
    const label = document.createElement("label");
    label.textContent = property;
    const lo = document.createElement("input");
    lo.type = "number";
    lo.placeholder = ">";
    lo.step = "any";
    const hi = document.createElement("input");
    hi.type = "number";
    hi.placeholder = "<";
    hi.step = "any";
    const update = () => {
      state.filters.set(property, {
        gt: lo.value === "" ? undefined : Number(lo.value),
        lt: hi.value === "" ? undefined : Number(hi.value),
      });
      render();
    };
    lo.addEventListener("change", update);
    hi.addEventListener("change", update);
    row.append(label, lo, hi);
    host.appendChild(row);
  }
}

function buildAxisControls(): void {
  for (const [selectId, key] of [["x-axis", "xProp"], ["y-axis", "yProp"]] as const) {
    const select = byId(selectId) as HTMLSelectElement;
    select.innerHTML = "";
    for (const property of NUMERIC_PROPERTIES) {
      const option = document.createElement("option");
      option.value = property;
      option.textContent = property;
      select.appendChild(option);
    }
    select.value = state[key];
    select.addEventListener("change", () => {
      // switching axes preserves filters and selection
      state[key] = select.value as NumericProperty;
      render();
    });
  }
}

export function loadText(text: string): void {
  try {
    state.dataset = parseDataset(text);
    state.error = null;
    state.selectedId = null;
  } catch (err) {
    state.dataset = null;
    state.error =
      err instanceof SchemaError
        ? `dataset rejected at ${err.path}: ${err.message}`
        : `failed to load dataset: ${(err as Error).message}`;
  }
  render();
}

export function init(): void {
  buildFilterControls();
  buildAxisControls();
  const input = byId("file-input") as HTMLInputElement;
  input.addEventListener("change", async () => {
    const file = input.files?.[0];
    if (file) loadText(await file.text());
  });
  render();
}

if (typeof document !== "undefined" && document.getElementById("file-input")) {
  init();
}
