/** Wire types for the ask/trace/schema HTTP API. */

export interface AnswerRecord {
  question_id: string;
  sql_section: string;
  notes_evidence_section: string;
  response_section: string;
  raw_model_output: string;
}

export interface StructuredSummary {
  sql: string;
  columns: string[];
  rows: unknown[][];
  row_count: number;
  attempt_count: number;
}

export interface ChunkSummary {
  key: string;
  note_id: string;
  score: number;
  text: string; // carries the "[timestamp] " prefix
}

export interface UnstructuredSummary {
  fallback_mode: boolean;
  chunks: ChunkSummary[];
}

export interface EvidenceSummary {
  structured: StructuredSummary | null;
  unstructured: UnstructuredSummary | null;
}

export interface SqlAttempt {
  attempt_number: number;
  outcome: string;
  sql: string;
  message: string;
}

export interface AskResponse {
  answer: AnswerRecord;
  evidence: EvidenceSummary;
  attempts: SqlAttempt[];
  trace_id: string;
}

export interface TraceStep {
  role: string;
  tool: string;
  input_digest: string;
  output_digest: string;
  wall_ms: number;
  prompt_tokens: number;
  completion_tokens: number;
  cost: number;
}

export interface TraceRecord {
  question_id: string;
  steps: TraceStep[];
  total_latency_ms: number;
  total_cost: number;
}

/** 4xx/5xx from the service; 502 bodies may carry a partial trace id. */
export interface ApiError {
  status: number;
  message: string;
  traceId?: string;
}
