/** Wire types of the triage service API. */

export interface EventRecord {
  t_occur: number;
  t_detect: number;
  event_type: string;
  attack_prior: number;
  sensor: string;
  protocol: string;
  ip_src: string;
  port_src: number;
  ip_dst: string;
  port_dst: number;
  severity: number;
  confidence: number;
  msg: string;
  id: string;
}

/** Serialized filter operation, canonical DSL text included. */
export interface OpRecord {
  kind: string;
  criteria: string;
  correlate_key: string[] | null;
  op_id: string;
  created_at: number;
}

export interface ApplyResponse {
  count: number;
  events: EventRecord[];
  op_id: string;
  op: OpRecord;
  groups?: string[][];
  request_id: string;
}

export interface RetrievalHit {
  experience_id: number;
  level: number;
  score: number;
  suggested_op: OpRecord | null;
}

export interface Suggestion {
  op: OpRecord;
  support: number;
  best_score: number;
}

export interface SuggestResponse {
  hits: RetrievalHit[];
  suggestions: Suggestion[];
  request_id: string;
}

export interface HealthResponse {
  status: string;
  version: string;
  events: number;
  experiences: number;
  model_loaded: boolean;
  request_id: string;
}

export interface IngestResponse {
  ingested: number;
  rejected: { index: number; error: string; detail: string }[];
  total: number;
  request_id: string;
}

export interface StepRecord {
  op: OpRecord;
  matched_count: number;
  sample_ids: string[];
}

export type OutcomeLabel = "ESCALATED" | "BENIGN" | "UNRESOLVED";

export interface ExperiencePayload {
  analyst: string;
  steps: StepRecord[];
  snapshot: {
    criteria: string;
    window_start: number;
    window_end: number;
    trigger_step: number;
  };
  outcome: OutcomeLabel;
  recorded_at: number;
}

export interface ServiceErrorBody {
  error: string;
  detail: string;
  position?: number;
  request_id?: string;
}
