/** Suggestion panel: ranked historical next ops, server order preserved. */

import { suggestionViews } from "./format.js";
import type { RetrievalHit, Suggestion } from "./types.js";

export function renderSuggestions(
  container: HTMLElement,
  suggestions: Suggestion[],
  hits: RetrievalHit[],
  onPick: (s: Suggestion) => void,
): void {
  if (suggestions.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no history yet";
    container.replaceChildren(empty);
    return;
  }
  const list = document.createElement("ol");
  list.className = "suggestion-list";
  const views = suggestionViews(suggestions, hits);
  views.forEach((view, i) => {
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.type = "button";
    button.className = "suggestion";
    button.textContent = view.criteria || "(match all)";
    button.title = "click to pre-fill the criteria builder";
    button.addEventListener("click", () => onPick(suggestions[i]));
    const meta = document.createElement("span");
    meta.className = "suggestion-meta";
    const src = view.sources.length ? ` from #${view.sources.join(", #")}` : "";
    meta.textContent = ` score ${view.bestScore}, support ${view.support}${src}`;
    item.append(button, meta);
    list.appendChild(item);
  });
  container.replaceChildren(list);
}
