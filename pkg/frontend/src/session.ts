/** One analyst triage session: the applied-op trace and its lifecycle.
 *
 * Nothing here filters or scores locally; every number shown comes from
 * one service response. Each activation issues exactly one
 * /filters/apply call and appends exactly one trace step (double
 * activations while a call is in flight are ignored). Overlapping
 * responses resolve last-write-wins: only the newest request may update
 * the visible event panel, stale ones are discarded by request id.
 */

import { TriageApi, nextRequestId } from "./api.js";
import type {
  ApplyResponse,
  EventRecord,
  OutcomeLabel,
  StepRecord,
  SuggestResponse,
  Suggestion,
} from "./types.js";

const SAMPLE_IDS = 5; // mirror of the server-side step summary

export interface ApplyOutcome {
  response: ApplyResponse;
  stale: boolean; // a newer apply superseded this one; panel untouched
}

export class ConsoleSession {
  readonly trace: StepRecord[] = [];
  /** Rows currently shown in the event table (server order). */
  visibleEvents: EventRecord[] = [];
  visibleCount = 0;

  private applying = false;
  private latestApplyId: string | null = null;
  private latestSuggestId: string | null = null;
  private readonly startedAt: number;
  private finished = false;

  constructor(
    private readonly api: TriageApi,
    readonly analyst: string = "console",
    private readonly clock: () => number = () => Math.floor(Date.now() / 1000),
  ) {
    this.startedAt = this.clock();
  }

  /** Apply criteria text; resolves null when ignored (already in flight). */
  async applyCriteria(criteria: string): Promise<ApplyOutcome | null> {
    if (this.applying || this.finished) {
      return null;
    }
    this.applying = true;
    const requestId = nextRequestId();
    this.latestApplyId = requestId;
    try {
      const response = await this.api.applyFilter(criteria, requestId);
      this.trace.push({
        op: response.op,
        matched_count: response.count,
        sample_ids: response.events.slice(0, SAMPLE_IDS).map((e) => e.id),
      });
      const stale = this.latestApplyId !== requestId;
      if (!stale) {
        this.visibleEvents = response.events;
        this.visibleCount = response.count;
      }
      return { response, stale };
    } finally {
      this.applying = false;
    }
  }

  /** Apply a retrieved suggestion: its DSL text verbatim. */
  applySuggestion(suggestion: Suggestion): Promise<ApplyOutcome | null> {
    return this.applyCriteria(suggestion.op.criteria);
  }

  /** Fetch ranked suggestions; stale responses report themselves. */
  async fetchSuggestions(
    k: number,
  ): Promise<{ response: SuggestResponse; stale: boolean }> {
    const requestId = nextRequestId();
    this.latestSuggestId = requestId;
    const response = await this.api.suggest(k, requestId);
    return { response, stale: this.latestSuggestId !== requestId };
  }

  get steps(): number {
    return this.trace.length;
  }

  /** The experience this session will store, serialized field-for-field. */
  experiencePayload(outcome: OutcomeLabel) {
    if (this.trace.length === 0) {
      throw new Error("cannot finish a session with no applied operations");
    }
    return {
      analyst: this.analyst,
      steps: this.trace.map((s) => ({
        op: { ...s.op },
        matched_count: s.matched_count,
        sample_ids: [...s.sample_ids],
      })),
      snapshot: {
        criteria: this.trace[0].op.criteria,
        window_start: this.startedAt,
        window_end: this.clock(),
        trigger_step: 0,
      },
      outcome,
      recorded_at: this.clock(),
    };
  }

  /** Finish the session: one POST /experiences, then the trace freezes. */
  async finish(outcome: OutcomeLabel): Promise<number> {
    const payload = this.experiencePayload(outcome);
    const { id } = await this.api.recordExperience(payload);
    this.finished = true;
    return id;
  }

  get isFinished(): boolean {
    return this.finished;
  }
}
