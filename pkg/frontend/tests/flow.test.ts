// @vitest-environment happy-dom
//
// End-to-end UI flow against a fully mocked API: the mounted app drives the
// same transitions a user would, and only ever POSTs to /ask.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { mount } from "../src/app.js";
import { fullEvidenceResponse, insufficientResponse, jsonResponse, simpleTrace } from "./fixtures.js";

function mockedClient() {
  const calls: { url: string; method: string }[] = [];
  const fetchImpl = async (url: string, init?: RequestInit) => {
    calls.push({ url, method: init?.method ?? "GET" });
    if (url === "/ask") return jsonResponse(fullEvidenceResponse);
    if (url.startsWith("/trace/")) return jsonResponse(simpleTrace);
    return jsonResponse({ detail: "not found" }, 404);
  };
  return { calls, client: new ApiClient("", fetchImpl) };
}

function type(root: HTMLElement, selector: string, value: string): void {
  const element = root.querySelector(selector) as HTMLInputElement | HTMLTextAreaElement;
  element.value = value;
  element.dispatchEvent(new Event("input", { bubbles: true }));
}

async function settle(predicate: () => boolean, tries = 100): Promise<void> {
  for (let i = 0; i < tries && !predicate(); i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

async function submitAndSettle(root: HTMLElement): Promise<void> {
  const before = root.querySelectorAll(".thread .entry").length;
  root.querySelector("form")!.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
  await settle(() => root.querySelectorAll(".thread .entry").length > before);
}

describe("mounted app flow", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById("root")!;
  });

  it("submit renders the answer with all three evidence panes", async () => {
    const { calls, client } = mockedClient();
    mount(root, client);
    type(root, "#scope-input", "10001");
    type(root, "#question-input", "What was the last aspirin dose for patient 10001?");
    await submitAndSettle(root);

    expect(root.querySelector(".response")!.textContent).toBe(
      "The last aspirin dose for patient 10001 was 325 mg.",
    );
    expect(root.querySelectorAll(".chunk-card")).toHaveLength(2);
    expect(root.querySelector(".sql-toggle")!.textContent).toContain("SQL evidence");
    expect(root.querySelector(".badges")!.textContent).toContain("130 ms");
    // only POST /ask mutates; the trace fetch is a GET
    expect(calls).toEqual([
      { url: "/ask", method: "POST" },
      { url: `/trace/${fullEvidenceResponse.trace_id}`, method: "GET" },
    ]);
  });

  it("refine-and-resubmit produces an append-only two-entry thread", async () => {
    const { client } = mockedClient();
    const app = mount(root, client);
    type(root, "#scope-input", "10001");
    type(root, "#question-input", "last visit?");
    await submitAndSettle(root);
    expect(app.getState().entries).toHaveLength(1);

    (root.querySelector('[data-action="refine"]') as HTMLElement).click();
    expect((root.querySelector("#question-input") as HTMLTextAreaElement).value).toBe("last visit?");
    type(root, "#question-input", "last inpatient visit?");
    await submitAndSettle(root);

    const entries = app.getState().entries;
    expect(entries.map((e) => e.questionText)).toEqual(["last visit?", "last inpatient visit?"]);
    expect(entries.every((e) => e.response?.trace_id)).toBe(true);
    expect(root.querySelectorAll(".thread .entry")).toHaveLength(2);
  });

  it("the trace panel opens from an entry and closes again", async () => {
    const { client } = mockedClient();
    mount(root, client);
    type(root, "#question-input", "q?");
    await submitAndSettle(root);

    (root.querySelector('[data-action="view-trace"]') as HTMLElement).click();
    await settle(() => root.querySelectorAll(".trace-step").length > 0);
    expect(root.querySelector(".trace-panel")).not.toBeNull();
    expect(root.querySelectorAll(".trace-step").length).toBe(simpleTrace.steps.length);

    (root.querySelector('[data-action="close-trace"]') as HTMLElement).click();
    expect(root.querySelector(".trace-panel")).toBeNull();
  });

  it("a 422 keeps the entry in history and focuses the scope picker", async () => {
    const calls: string[] = [];
    const client = new ApiClient("", async (url, init) => {
      calls.push(url);
      return jsonResponse({ detail: "unknown patient_scope '99999'" }, 422);
    });
    const app = mount(root, client);
    type(root, "#scope-input", "99999");
    type(root, "#question-input", "anything?");
    await submitAndSettle(root);

    expect(app.getState().entries[0].status).toBe("error");
    expect(root.querySelector(".error-line")!.textContent).toContain("422");
    expect(root.querySelector("#scope-input")!.className).toContain("focus-me");
  });

  it("insufficient evidence renders the distinct empty state", async () => {
    const client = new ApiClient("", async (url) => {
      if (url === "/ask") return jsonResponse(insufficientResponse);
      return jsonResponse({ detail: "unknown trace" }, 404);
    });
    mount(root, client);
    type(root, "#scope-input", "10004");
    type(root, "#question-input", "Is there any note evidence about allergies for patient 10004?");
    await submitAndSettle(root);

    expect(root.querySelector(".empty-evidence")).not.toBeNull();
    expect(root.querySelector(".refine-hint")!.textContent).toContain("refining");
  });
});
