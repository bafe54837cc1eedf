/** Mocked API payloads mirroring the service's documented wire format. */

import type { AskResponse, TraceRecord } from "../src/types.js";

export const fullEvidenceResponse: AskResponse = {
  answer: {
    question_id: "ask-5e4591e72b0c",
    sql_section:
      "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = :patient_id AND drug = 'Aspirin' ORDER BY startdate DESC LIMIT 1",
    notes_evidence_section:
      "[2126-08-20T15:30:00+00:00] Aspirin increased to 325 mg daily after the procedure.",
    response_section: "The last aspirin dose for patient 10001 was 325 mg.",
    raw_model_output:
      "1. SQL QUERY: SELECT dose_val_rx, dose_unit_rx FROM prescriptions ...\n2. Response: The last aspirin dose for patient 10001 was 325 mg.",
  },
  evidence: {
    structured: {
      sql: "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = :patient_id AND drug = 'Aspirin' ORDER BY startdate DESC LIMIT 1",
      columns: ["dose_val_rx", "dose_unit_rx"],
      rows: [["325", "mg"]],
      row_count: 1,
      attempt_count: 1,
    },
    unstructured: {
      fallback_mode: false,
      chunks: [
        {
          key: "n1001c#0000",
          note_id: "n1001c",
          score: 0.3554,
          text: "[2126-08-21T09:00:00+00:00] Nursing note. Education was provided on the increased aspirin dose.",
        },
        {
          key: "n1001b#0000",
          note_id: "n1001b",
          score: 0.2335,
          text: "[2126-08-20T15:30:00+00:00] Aspirin increased to 325 mg daily after the procedure.",
        },
      ],
    },
  },
  attempts: [
    {
      attempt_number: 1,
      outcome: "rows",
      sql: "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = :patient_id AND drug = 'Aspirin' ORDER BY startdate DESC LIMIT 1",
      message: "",
    },
  ],
  trace_id: "t000001-ask-5e4591e72b0c",
};

export const insufficientResponse: AskResponse = {
  answer: {
    question_id: "ask-0000aaaa1111",
    sql_section: "",
    notes_evidence_section: "",
    response_section: "insufficient evidence found",
    raw_model_output: "2. Response: insufficient evidence found",
  },
  evidence: { structured: null, unstructured: { fallback_mode: true, chunks: [] } },
  attempts: [
    { attempt_number: 1, outcome: "schema_error", sql: "SELECT allergy_list FROM allergy_history", message: "no such table" },
    { attempt_number: 2, outcome: "schema_error", sql: "SELECT allergy_list FROM allergy_history", message: "no such table" },
    { attempt_number: 3, outcome: "schema_error", sql: "SELECT allergy_list FROM allergy_history", message: "no such table" },
  ],
  trace_id: "t000002-ask-0000aaaa1111",
};

export const simpleTrace: TraceRecord = {
  question_id: "ask-5e4591e72b0c",
  steps: [
    { role: "table_reviewer", tool: "chat_completion", input_digest: "a1", output_digest: "b1", wall_ms: 30, prompt_tokens: 120, completion_tokens: 18, cost: 0.0003 },
    { role: "table_selector", tool: "table_retrieval[name:description]", input_digest: "a2", output_digest: "b2", wall_ms: 0, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "sql_writer", tool: "chat_completion", input_digest: "a3", output_digest: "b3", wall_ms: 40, prompt_tokens: 700, completion_tokens: 35, cost: 0.0015 },
    { role: "sql_executor", tool: "sqlite", input_digest: "a4", output_digest: "b4", wall_ms: 0, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "note_retriever", tool: "semantic_search[structure_guided]", input_digest: "a5", output_digest: "b5", wall_ms: 0, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "answer_synthesizer", tool: "chat_completion", input_digest: "a6", output_digest: "b6", wall_ms: 60, prompt_tokens: 500, completion_tokens: 42, cost: 0.0011 },
  ],
  total_latency_ms: 130,
  total_cost: 0.0029,
};

/** Two writer/executor pairs: one failed attempt, then the repaired one. */
export const repairLoopTrace: TraceRecord = {
  question_id: "ask-2222bbbb3333",
  steps: [
    { role: "table_reviewer", tool: "chat_completion", input_digest: "c1", output_digest: "d1", wall_ms: 30, prompt_tokens: 120, completion_tokens: 18, cost: 0.0003 },
    { role: "table_selector", tool: "table_retrieval[name:description]", input_digest: "c2", output_digest: "d2", wall_ms: 0, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "sql_writer", tool: "chat_completion", input_digest: "c3", output_digest: "d3", wall_ms: 41, prompt_tokens: 690, completion_tokens: 30, cost: 0.0014 },
    { role: "sql_executor", tool: "sqlite", input_digest: "c4", output_digest: "d4", wall_ms: 2, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "sql_writer", tool: "chat_completion", input_digest: "c5", output_digest: "d5", wall_ms: 44, prompt_tokens: 760, completion_tokens: 33, cost: 0.0016 },
    { role: "sql_executor", tool: "sqlite", input_digest: "c6", output_digest: "d6", wall_ms: 1, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "note_retriever", tool: "semantic_search[structure_guided]", input_digest: "c7", output_digest: "d7", wall_ms: 0, prompt_tokens: 0, completion_tokens: 0, cost: 0 },
    { role: "answer_synthesizer", tool: "chat_completion", input_digest: "c8", output_digest: "d8", wall_ms: 62, prompt_tokens: 540, completion_tokens: 40, cost: 0.0012 },
  ],
  total_latency_ms: 180,
  total_cost: 0.0045,
};

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
