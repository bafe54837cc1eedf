/** Pure HTML renderers: the whole view is a function of SessionState.
 *
 * No DOM reads, no globals, no side effects — snapshot tests feed states in
 * and compare the emitted markup. Event wiring happens in app.ts via
 * data-action attributes.
 */

import type { SessionState, ThreadEntry, TraceView } from "./state.js";
import type { AskResponse, TraceRecord, TraceStep } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const INSUFFICIENT_MARKER = "insufficient evidence";

function isInsufficient(response: AskResponse): boolean {
  const noRows = !response.evidence.structured;
  const noChunks = !response.evidence.unstructured || response.evidence.unstructured.chunks.length === 0;
  return (noRows && noChunks) || response.answer.response_section.toLowerCase().includes(INSUFFICIENT_MARKER);
}

function badge(label: string, value: string): string {
  return `<span class="badge"><span class="badge-label">${escapeHtml(label)}</span> ${escapeHtml(value)}</span>`;
}

function renderBadges(entry: ThreadEntry): string {
  if (!entry.trace) return "";
  const latency = `${entry.trace.total_latency_ms.toFixed(0)} ms`;
  const cost = entry.trace.total_cost.toFixed(4);
  return `<div class="badges">${badge("latency", latency)}${badge("cost", cost)}</div>`;
}

function renderSqlEvidence(entry: ThreadEntry, expanded: boolean): string {
  const structured = entry.response?.evidence.structured;
  if (!structured) return "";
  const header =
    `<button class="sql-toggle" data-action="toggle-sql" data-entry="${entry.id}">` +
    `${expanded ? "&#9662;" : "&#9656;"} SQL evidence (${structured.row_count} row${structured.row_count === 1 ? "" : "s"}, ` +
    `${structured.attempt_count} attempt${structured.attempt_count === 1 ? "" : "s"})</button>`;
  if (!expanded) return `<section class="sql-evidence">${header}</section>`;
  const headCells = structured.columns.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const bodyRows = structured.rows
    .map((row) => `<tr>${row.map((v) => `<td>${escapeHtml(v === null ? "NULL" : String(v))}</td>`).join("")}</tr>`)
    .join("");
  const truncated =
    structured.row_count > structured.rows.length
      ? `<p class="table-note">showing ${structured.rows.length} of ${structured.row_count} rows</p>`
      : "";
  return (
    `<section class="sql-evidence">${header}` +
    `<pre class="sql-text">${escapeHtml(structured.sql)}</pre>` +
    `<table class="result-table"><thead><tr>${headCells}</tr></thead><tbody>${bodyRows}</tbody></table>` +
    truncated +
    `</section>`
  );
}

function renderChunkCards(entry: ThreadEntry): string {
  const unstructured = entry.response?.evidence.unstructured;
  if (!unstructured || unstructured.chunks.length === 0) return "";
  const mode = unstructured.fallback_mode ? "notes-only fallback" : "structure-guided";
  const cards = unstructured.chunks
    .map((chunk) => {
      // chunk text arrives as "[timestamp] body"; keep the timestamp visible
      const match = chunk.text.match(/^\[([^\]]+)\]\s*(.*)$/s);
      const timestamp = match ? match[1] : "";
      const body = match ? match[2] : chunk.text;
      return (
        `<article class="chunk-card">` +
        `<header><time>${escapeHtml(timestamp)}</time>` +
        `<span class="chunk-meta">${escapeHtml(chunk.note_id)} &middot; score ${chunk.score.toFixed(4)}</span></header>` +
        `<p>${escapeHtml(body)}</p>` +
        `</article>`
      );
    })
    .join("");
  return `<section class="note-evidence"><h4>Note evidence <span class="mode">(${mode})</span></h4>${cards}</section>`;
}

function renderOkEntry(entry: ThreadEntry, expanded: boolean): string {
  const response = entry.response!;
  if (isInsufficient(response)) {
    return (
      `<div class="answer empty-evidence">` +
      `<p class="response">${escapeHtml(response.answer.response_section)}</p>` +
      `<p class="refine-hint">No usable evidence was found. Try refining the question with a clearer ` +
      `time window or care setting, or pick a different patient scope.</p>` +
      renderBadges(entry) +
      `</div>`
    );
  }
  return (
    `<div class="answer">` +
    `<p class="response">${escapeHtml(response.answer.response_section)}</p>` +
    renderBadges(entry) +
    renderSqlEvidence(entry, expanded) +
    renderChunkCards(entry) +
    `</div>`
  );
}

function renderErrorEntry(entry: ThreadEntry): string {
  const error = entry.error!;
  const traceLink = error.traceId
    ? `<button class="link" data-action="view-trace" data-trace="${escapeHtml(error.traceId)}">partial trace</button>`
    : "";
  return (
    `<div class="answer error">` +
    `<p class="error-line">request failed (${error.status || "network"}): ${escapeHtml(error.message)} ${traceLink}</p>` +
    `</div>`
  );
}

function renderEntry(entry: ThreadEntry, state: SessionState): string {
  const expanded = state.expandedSql.includes(entry.id);
  const scope = entry.patientScope ? ` <span class="scope">patient ${escapeHtml(entry.patientScope)}</span>` : "";
  const traceButton =
    entry.status === "ok" && entry.response
      ? `<button class="link" data-action="view-trace" data-trace="${escapeHtml(entry.response.trace_id)}">trace</button>`
      : "";
  return (
    `<li class="entry entry-${entry.status}" data-entry-id="${entry.id}">` +
    `<div class="entry-header"><span class="question">${escapeHtml(entry.questionText)}</span>${scope}` +
    `<span class="entry-actions">${traceButton}` +
    `<button class="link" data-action="refine" data-entry="${entry.id}">refine</button></span></div>` +
    (entry.status === "ok" ? renderOkEntry(entry, expanded) : renderErrorEntry(entry)) +
    `</li>`
  );
}

interface AttemptGroup {
  label: string;
  steps: TraceStep[];
}

/** Group consecutive writer/executor pairs into numbered repair attempts. */
export function groupTraceSteps(trace: TraceRecord): AttemptGroup[] {
  const groups: AttemptGroup[] = [];
  let attempt = 0;
  let i = 0;
  while (i < trace.steps.length) {
    const step = trace.steps[i];
    if (step.role === "sql_writer") {
      attempt += 1;
      const group: AttemptGroup = { label: `SQL attempt ${attempt}`, steps: [step] };
      if (i + 1 < trace.steps.length && trace.steps[i + 1].role === "sql_executor") {
        group.steps.push(trace.steps[i + 1]);
        i += 1;
      }
      groups.push(group);
      i += 1;
      continue;
    }
    groups.push({ label: "", steps: [step] });
    i += 1;
  }
  return groups;
}

function renderTraceStep(step: TraceStep, maxMs: number): string {
  const width = maxMs > 0 ? Math.max(1, Math.round((step.wall_ms / maxMs) * 100)) : 1;
  const tokens = step.prompt_tokens + step.completion_tokens;
  return (
    `<div class="trace-step">` +
    `<span class="step-role">${escapeHtml(step.role)}</span>` +
    `<span class="step-tool">${escapeHtml(step.tool)}</span>` +
    `<span class="step-bar"><span class="step-bar-fill" style="width:${width}%"></span></span>` +
    `<span class="step-ms">${step.wall_ms.toFixed(0)} ms</span>` +
    `<span class="step-tokens">${tokens} tok</span>` +
    `<span class="step-cost">${step.cost.toFixed(4)}</span>` +
    `</div>`
  );
}

export function renderTraceView(view: TraceView): string {
  const close = `<button class="link" data-action="close-trace">close</button>`;
  if (view.kind === "loading") {
    return `<aside class="trace-panel"><header>trace ${escapeHtml(view.traceId)} ${close}</header><p>loading&hellip;</p></aside>`;
  }
  if (view.kind === "expired") {
    return (
      `<aside class="trace-panel"><header>trace ${escapeHtml(view.traceId)} ${close}</header>` +
      `<p class="trace-expired">This trace has expired or was recorded by another service instance.</p></aside>`
    );
  }
  const trace = view.trace;
  const maxMs = Math.max(...trace.steps.map((s) => s.wall_ms), 0);
  const groups = groupTraceSteps(trace)
    .map((group) => {
      const steps = group.steps.map((s) => renderTraceStep(s, maxMs)).join("");
      return group.label
        ? `<div class="attempt-group"><div class="attempt-label">${escapeHtml(group.label)}</div>${steps}</div>`
        : steps;
    })
    .join("");
  return (
    `<aside class="trace-panel">` +
    `<header>trace ${escapeHtml(view.traceId)} ${close}</header>` +
    `<div class="trace-totals">total ${trace.total_latency_ms.toFixed(0)} ms &middot; cost ${trace.total_cost.toFixed(4)}</div>` +
    `<div class="trace-steps">${groups}</div>` +
    `</aside>`
  );
}

export function renderApp(state: SessionState): string {
  const entries = state.entries.map((entry) => renderEntry(entry, state)).join("");
  const submitDisabled = state.pending ? " disabled" : "";
  const scopeClass = state.focusScopePicker ? " class=\"focus-me\"" : "";
  const tracePanel = state.traceView ? renderTraceView(state.traceView) : "";
  return (
    `<main class="app">` +
    `<h1>EHR evidence review</h1>` +
    `<form id="ask-form">` +
    `<label>Patient scope <input id="scope-input" name="scope"${scopeClass} value="${escapeHtml(state.patientScope)}" placeholder="e.g. 10001"></label>` +
    `<textarea id="question-input" name="question" placeholder="Ask a patient-level question&hellip;">${escapeHtml(state.editorText)}</textarea>` +
    `<button id="submit-btn" type="submit"${submitDisabled}>${state.pending ? "Asking&hellip;" : "Ask"}</button>` +
    `</form>` +
    `<ol class="thread">${entries}</ol>` +
    tracePanel +
    `</main>`
  );
}
