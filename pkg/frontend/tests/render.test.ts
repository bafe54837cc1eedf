import { describe, expect, it } from "vitest";

import { escapeHtml, groupTraceSteps, renderApp, renderTraceView } from "../src/render.js";
import {
  initialState,
  setEditorText,
  setPatientScope,
  submitFailed,
  submitStarted,
  submitSucceeded,
  toggleSql,
  traceLoaded,
} from "../src/state.js";
import { fullEvidenceResponse, insufficientResponse, repairLoopTrace, simpleTrace } from "./fixtures.js";

function fullEvidenceState() {
  let state = setPatientScope(initialState(), "10001");
  state = setEditorText(state, "What was the last aspirin dose for patient 10001?");
  state = submitSucceeded(
    submitStarted(state),
    "What was the last aspirin dose for patient 10001?",
    fullEvidenceResponse,
    simpleTrace,
  );
  return toggleSql(state, 1); // golden state shows the expanded SQL pane
}

describe("golden states", () => {
  it("full evidence: answer, sql table, chunk cards, badges", () => {
    expect(renderApp(fullEvidenceState())).toMatchSnapshot();
  });

  it("insufficient evidence: distinct empty state with refine hint", () => {
    let state = setPatientScope(initialState(), "10004");
    state = setEditorText(state, "Is there any note evidence about allergies for patient 10004?");
    state = submitSucceeded(
      submitStarted(state),
      "Is there any note evidence about allergies for patient 10004?",
      insufficientResponse,
    );
    expect(renderApp(state)).toMatchSnapshot();
  });

  it("repair-loop trace: grouped writer/executor pairs", () => {
    const state = traceLoaded(fullEvidenceState(), "t000003-ask-2222bbbb3333", repairLoopTrace);
    expect(renderTraceView(state.traceView!)).toMatchSnapshot();
  });
});

describe("rendering details", () => {
  it("the response section is rendered prominently", () => {
    const html = renderApp(fullEvidenceState());
    expect(html).toContain('<p class="response">The last aspirin dose for patient 10001 was 325 mg.</p>');
  });

  it("chunk cards always show the timestamp prefix", () => {
    const html = renderApp(fullEvidenceState());
    expect(html).toContain("<time>2126-08-21T09:00:00+00:00</time>");
    expect(html).toContain("<time>2126-08-20T15:30:00+00:00</time>");
  });

  it("latency and cost badges come from the trace", () => {
    const html = renderApp(fullEvidenceState());
    expect(html).toContain("130 ms");
    expect(html).toContain("0.0029");
  });

  it("collapsed sql pane hides the table but keeps counts visible", () => {
    const state = toggleSql(fullEvidenceState(), 1); // collapse again
    const html = renderApp(state);
    expect(html).toContain("SQL evidence (1 row, 1 attempt)");
    expect(html).not.toContain("result-table");
  });

  it("a 422 error renders inline and marks the scope picker for focus", () => {
    let state = setEditorText(initialState(), "who?");
    state = submitFailed(submitStarted(state), "who?", { status: 422, message: "unknown patient_scope '99999'" });
    const html = renderApp(state);
    expect(html).toContain("request failed (422)");
    expect(html).toContain('id="scope-input"');
    expect(html).toContain("focus-me");
  });

  it("a 502 error links to the partial trace", () => {
    let state = setEditorText(initialState(), "down?");
    state = submitFailed(submitStarted(state), "down?", {
      status: 502,
      message: "chat backend failed",
      traceId: "t000009-partial",
    });
    const html = renderApp(state);
    expect(html).toContain("partial trace");
    expect(html).toContain('data-trace="t000009-partial"');
  });

  it("unknown trace renders the expired state", () => {
    const html = renderTraceView({ traceId: "gone", kind: "expired" });
    expect(html).toContain("trace-expired");
    expect(html).toMatchSnapshot();
  });

  it("pending state disables the submit button", () => {
    const state = submitStarted(setEditorText(initialState(), "q?"));
    expect(renderApp(state)).toContain("<button id=\"submit-btn\" type=\"submit\" disabled>");
  });

  it("rendering is a pure function of state", () => {
    const state = fullEvidenceState();
    expect(renderApp(state)).toBe(renderApp(state));
  });
});

describe("trace grouping", () => {
  it("pairs each writer with its executor as one numbered attempt", () => {
    const groups = groupTraceSteps(repairLoopTrace);
    const labels = groups.filter((g) => g.label).map((g) => g.label);
    expect(labels).toEqual(["SQL attempt 1", "SQL attempt 2"]);
    for (const group of groups.filter((g) => g.label)) {
      expect(group.steps.map((s) => s.role)).toEqual(["sql_writer", "sql_executor"]);
    }
  });

  it("keeps non-loop steps ungrouped and ordered", () => {
    const groups = groupTraceSteps(simpleTrace);
    const flat = groups.flatMap((g) => g.steps.map((s) => s.role));
    expect(flat).toEqual(simpleTrace.steps.map((s) => s.role));
  });
});

describe("escapeHtml", () => {
  it("neutralizes markup in clinical text", () => {
    expect(escapeHtml("<script>alert('1 & 2')</script>")).toBe(
      "&lt;script&gt;alert(&#39;1 &amp; 2&#39;)&lt;/script&gt;",
    );
  });
});
