/** Pure presentation helpers (kept DOM-free so node can test them). */

import type { EventRecord, RetrievalHit, Suggestion } from "./types.js";

/** The 13 tuple columns of the event table, wire order. */
export const EVENT_COLUMNS = [
  "t_occur",
  "t_detect",
  "event_type",
  "attack_prior",
  "sensor",
  "protocol",
  "ip_src",
  "port_src",
  "ip_dst",
  "port_dst",
  "severity",
  "confidence",
  "msg",
] as const;

export function eventRows(events: EventRecord[]): string[][] {
  return events.map((e) =>
    EVENT_COLUMNS.map((col) => String(e[col as keyof EventRecord])),
  );
}

export function formatScore(score: number): string {
  return score.toFixed(3);
}

export interface SuggestionView {
  criteria: string;
  kind: string;
  support: number;
  bestScore: string;
  /** Experience ids whose matched step suggested this op. */
  sources: number[];
}

function opKey(op: { kind: string; criteria: string; correlate_key: string[] | null }): string {
  return JSON.stringify([op.kind, op.criteria, op.correlate_key ?? []]);
}

/** Join the suggestion list with its source experiences (both come from
 * the same /suggest response; no client-side scoring happens here). */
export function suggestionViews(
  suggestions: Suggestion[],
  hits: RetrievalHit[],
): SuggestionView[] {
  const sources = new Map<string, number[]>();
  for (const hit of hits) {
    if (hit.suggested_op) {
      const key = opKey(hit.suggested_op);
      const list = sources.get(key) ?? [];
      list.push(hit.experience_id);
      sources.set(key, list);
    }
  }
  return suggestions.map((s) => ({
    criteria: s.op.criteria,
    kind: s.op.kind,
    support: s.support,
    bestScore: formatScore(s.best_score),
    sources: sources.get(opKey(s.op)) ?? [],
  }));
}

/** Extend criteria text with one composed clause (text stays the truth). */
export function appendClause(
  existing: string,
  attribute: string,
  op: string,
  value: string,
): string {
  const clause = `${attribute} ${op} ${value}`.trim();
  const base = existing.trim();
  return base ? `${base} AND ${clause}` : clause;
}

/** Mark a parser error position inside criteria text for inline display. */
export function caretLine(text: string, position: number): string {
  const clamped = Math.max(0, Math.min(position, text.length));
  return " ".repeat(clamped) + "^";
}
