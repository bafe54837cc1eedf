/** Browser bootstrap: owns the mutable state, re-renders on every
 * transition, and delegates events from data-action attributes.
 */

import { ApiClient, asApiError } from "./api.js";
import {
  SessionState,
  canSubmit,
  initialState,
  setEditorText,
  setPatientScope,
  startRefine,
  submitFailed,
  submitStarted,
  submitSucceeded,
  toggleSql,
  traceClosed,
  traceExpired,
  traceLoaded,
  traceOpening,
} from "./state.js";
import { renderApp } from "./render.js";

export function mount(root: HTMLElement, api: ApiClient = new ApiClient()): { getState: () => SessionState } {
  let state = initialState();

  function update(next: SessionState): void {
    state = next;
    root.innerHTML = renderApp(state);
    const scope = root.querySelector<HTMLInputElement>("#scope-input");
    if (scope && state.focusScopePicker) scope.focus();
  }

  async function submit(): Promise<void> {
    if (!canSubmit(state)) return;
    const questionText = state.editorText.trim();
    update(submitStarted(state));
    try {
      const response = await api.ask({
        question: questionText,
        patient_scope: state.patientScope.trim() || undefined,
      });
      // badges come from the trace; a missing trace only drops the badges
      let trace;
      try {
        const result = await api.trace(response.trace_id);
        if (result.kind === "loaded") trace = result.trace;
      } catch {
        trace = undefined;
      }
      update(submitSucceeded(state, questionText, response, trace));
    } catch (error) {
      update(submitFailed(state, questionText, asApiError(error)));
    }
  }

  async function openTrace(traceId: string): Promise<void> {
    update(traceOpening(state, traceId));
    try {
      const result = await api.trace(traceId);
      if (result.kind === "expired") {
        update(traceExpired(state, traceId));
      } else {
        update(traceLoaded(state, traceId, result.trace));
      }
    } catch {
      update(traceExpired(state, traceId));
    }
  }

  root.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });

  root.addEventListener("input", (event) => {
    const target = event.target as HTMLElement;
    if (target.id === "question-input") {
      state = setEditorText(state, (target as HTMLTextAreaElement).value);
    } else if (target.id === "scope-input") {
      state = setPatientScope(state, (target as HTMLInputElement).value);
    }
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset.action;
    if (action === "toggle-sql") {
      update(toggleSql(state, Number(target.dataset.entry)));
    } else if (action === "refine") {
      update(startRefine(state, Number(target.dataset.entry)));
      root.querySelector<HTMLTextAreaElement>("#question-input")?.focus();
    } else if (action === "view-trace" && target.dataset.trace) {
      void openTrace(target.dataset.trace);
    } else if (action === "close-trace") {
      update(traceClosed(state));
    }
  });

  update(state);
  return { getState: () => state };
}

declare global {
  interface Window {
    __ehrqaMounted?: boolean;
  }
}

if (typeof document !== "undefined" && document.getElementById("app") && !window.__ehrqaMounted) {
  window.__ehrqaMounted = true;
  mount(document.getElementById("app")!);
}
