/** Event table rendering. All values come straight from one
 * /filters/apply response; the row counter always shows the server's
 * count so the display can never drift from the API. */

import { EVENT_COLUMNS, eventRows } from "./format.js";
import type { EventRecord } from "./types.js";

export function renderEventTable(
  container: HTMLElement,
  countEl: HTMLElement,
  events: EventRecord[],
  serverCount: number,
): void {
  countEl.textContent = `${serverCount} event${serverCount === 1 ? "" : "s"}`;
  const table = document.createElement("table");
  table.className = "event-table";
  const head = table.createTHead().insertRow();
  for (const col of EVENT_COLUMNS) {
    const th = document.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  const body = table.createTBody();
  for (const row of eventRows(events)) {
    const tr = body.insertRow();
    for (const cell of row) {
      tr.insertCell().textContent = cell;
    }
  }
  container.replaceChildren(table);
  if (events.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "no events match";
    container.appendChild(empty);
  }
}
