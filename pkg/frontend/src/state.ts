/** Session state and its pure transitions.
 *
 * The thread is append-only: every submission (including failures and
 * unchanged resubmits) becomes a new entry, so the history always mirrors
 * what was actually asked. One request may be in flight at a time; the
 * submit path is disabled while pending.
 */

import type { ApiError, AskResponse, TraceRecord } from "./types.js";

export type TraceView =
  | { traceId: string; kind: "loading" }
  | { traceId: string; kind: "loaded"; trace: TraceRecord }
  | { traceId: string; kind: "expired" };

export interface ThreadEntry {
  id: number;
  questionText: string;
  patientScope: string;
  status: "ok" | "error";
  response?: AskResponse;
  /** badges come from the trace fetched right after a successful ask */
  trace?: TraceRecord;
  error?: ApiError;
}

export interface SessionState {
  patientScope: string;
  profile?: string;
  editorText: string;
  pending: boolean;
  entries: ThreadEntry[];
  expandedSql: number[]; // entry ids with the SQL pane expanded
  traceView?: TraceView;
  focusScopePicker: boolean;
}

export function initialState(): SessionState {
  return {
    patientScope: "",
    profile: undefined,
    editorText: "",
    pending: false,
    entries: [],
    expandedSql: [],
    focusScopePicker: false,
  };
}

function nextEntryId(state: SessionState): number {
  return state.entries.length === 0 ? 1 : state.entries[state.entries.length - 1].id + 1;
}

export function canSubmit(state: SessionState): boolean {
  return !state.pending && state.editorText.trim().length > 0;
}

export function submitStarted(state: SessionState): SessionState {
  return { ...state, pending: true, focusScopePicker: false };
}

export function submitSucceeded(
  state: SessionState,
  questionText: string,
  response: AskResponse,
  trace?: TraceRecord,
): SessionState {
  const entry: ThreadEntry = {
    id: nextEntryId(state),
    questionText,
    patientScope: state.patientScope,
    status: "ok",
    response,
    trace,
  };
  return { ...state, pending: false, editorText: "", entries: [...state.entries, entry] };
}

export function submitFailed(state: SessionState, questionText: string, error: ApiError): SessionState {
  const entry: ThreadEntry = {
    id: nextEntryId(state),
    questionText,
    patientScope: state.patientScope,
    status: "error",
    error,
  };
  return {
    ...state,
    pending: false,
    entries: [...state.entries, entry],
    focusScopePicker: error.status === 422,
  };
}

/** Pre-fill the editor with a prior entry's question; history is untouched. */
export function startRefine(state: SessionState, entryId: number): SessionState {
  const entry = state.entries.find((e) => e.id === entryId);
  if (!entry) return state;
  return { ...state, editorText: entry.questionText };
}

export function setEditorText(state: SessionState, text: string): SessionState {
  return { ...state, editorText: text };
}

export function setPatientScope(state: SessionState, scope: string): SessionState {
  return { ...state, patientScope: scope, focusScopePicker: false };
}

export function toggleSql(state: SessionState, entryId: number): SessionState {
  const expanded = state.expandedSql.includes(entryId)
    ? state.expandedSql.filter((id) => id !== entryId)
    : [...state.expandedSql, entryId];
  return { ...state, expandedSql: expanded };
}

export function traceOpening(state: SessionState, traceId: string): SessionState {
  return { ...state, traceView: { traceId, kind: "loading" } };
}

export function traceLoaded(state: SessionState, traceId: string, trace: TraceRecord): SessionState {
  return { ...state, traceView: { traceId, kind: "loaded", trace } };
}

export function traceExpired(state: SessionState, traceId: string): SessionState {
  return { ...state, traceView: { traceId, kind: "expired" } };
}

export function traceClosed(state: SessionState): SessionState {
  return { ...state, traceView: undefined };
}
