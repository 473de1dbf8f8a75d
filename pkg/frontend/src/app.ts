/** Console bootstrap: wires the filter bar, table, suggestion panel, and
 * session lifecycle to the service. Polling (configurable interval)
 * refreshes the health line and the suggestion panel; the event table
 * changes only when the analyst applies criteria. */

import { ServiceError, TriageApi } from "./api.js";
import { appendClause, caretLine } from "./format.js";
import { ConsoleSession } from "./session.js";
import { renderSuggestions } from "./suggestions.js";
import { renderEventTable } from "./table.js";
import type { OutcomeLabel, Suggestion } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function startConsole(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "http://127.0.0.1:8787";
  const pollMs = Number(params.get("poll") ?? "5000");
  const api = new TriageApi(base);
  let session = new ConsoleSession(api, params.get("analyst") ?? "console");

  const criteriaInput = el<HTMLInputElement>("criteria");
  const applyButton = el<HTMLButtonElement>("apply");
  const parseError = el<HTMLPreElement>("parse-error");
  const banner = el<HTMLDivElement>("banner");
  const tableBox = el<HTMLDivElement>("event-table");
  const countEl = el<HTMLSpanElement>("event-count");
  const suggestBox = el<HTMLDivElement>("suggestions");
  const traceList = el<HTMLOListElement>("trace");
  const healthLine = el<HTMLSpanElement>("health");
  const outcomeSelect = el<HTMLSelectElement>("outcome");
  const finishButton = el<HTMLButtonElement>("finish");
  const composerAttr = el<HTMLSelectElement>("composer-attr");
  const composerOp = el<HTMLSelectElement>("composer-op");
  const composerValue = el<HTMLInputElement>("composer-value");
  const composerAdd = el<HTMLButtonElement>("composer-add");

  function showBanner(text: string): void {
    banner.textContent = text;
    banner.hidden = !text;
  }

  function showParseError(text: string, position?: number): void {
    parseError.hidden = false;
    parseError.textContent =
      position === undefined
        ? text
        : `${criteriaInput.value}\n${caretLine(criteriaInput.value, position)}\n${text}`;
  }

  function redrawTrace(): void {
    traceList.replaceChildren(
      ...session.trace.map((step, i) => {
        const li = document.createElement("li");
        li.textContent =
          `${step.op.kind} ${step.op.criteria || "(match all)"}` +
          ` -> ${step.matched_count}`;
        li.dataset.step = String(i);
        return li;
      }),
    );
  }

  async function refreshSuggestions(): Promise<void> {
    try {
      const { response, stale } = await session.fetchSuggestions(5);
      if (!stale) {
        renderSuggestions(suggestBox, response.suggestions, response.hits, pick);
      }
    } catch (err) {
      showBanner(`suggestions unavailable: ${String(err)}`);
    }
  }

  function pick(suggestion: Suggestion): void {
    // pre-fill only; the analyst applies explicitly
    criteriaInput.value = suggestion.op.criteria;
    criteriaInput.focus();
  }

  async function apply(): Promise<void> {
    parseError.hidden = true;
    showBanner("");
    try {
      const outcome = await session.applyCriteria(criteriaInput.value);
      if (outcome === null) {
        return; // in flight or finished: one activation, one call
      }
      if (!outcome.stale) {
        renderEventTable(tableBox, countEl, session.visibleEvents,
          session.visibleCount);
      }
      redrawTrace();
      await refreshSuggestions();
    } catch (err) {
      if (err instanceof ServiceError && err.body.error === "CriteriaSyntaxError") {
        showParseError(err.body.detail, err.position);
      } else {
        showBanner(`apply failed: ${String(err)}`);
      }
    }
  }

  async function finish(): Promise<void> {
    try {
      const id = await session.finish(outcomeSelect.value as OutcomeLabel);
      showBanner(`session stored as experience #${id}`);
      session = new ConsoleSession(api, session.analyst);
      redrawTrace();
      await refreshSuggestions();
    } catch (err) {
      showBanner(`finish failed: ${String(err)}`);
    }
  }

  async function refreshHealth(): Promise<void> {
    try {
      const health = await api.health();
      healthLine.textContent =
        `service ${health.version}: ${health.events} events, ` +
        `${health.experiences} experiences, model ` +
        (health.model_loaded ? "loaded" : "absent");
    } catch {
      healthLine.textContent = "service unreachable";
    }
  }

  applyButton.addEventListener("click", () => void apply());
  criteriaInput.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") {
      void apply();
    }
  });
  finishButton.addEventListener("click", () => void finish());
  composerAdd.addEventListener("click", () => {
    criteriaInput.value = appendClause(
      criteriaInput.value,
      composerAttr.value,
      composerOp.value,
      composerValue.value,
    );
    composerValue.value = "";
    criteriaInput.focus();
  });

  void refreshHealth();
  void refreshSuggestions();
  if (pollMs > 0) {
    window.setInterval(() => {
      void refreshHealth();
      void refreshSuggestions();
    }, pollMs);
  }
}

startConsole();
