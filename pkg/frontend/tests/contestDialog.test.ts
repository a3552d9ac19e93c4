import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ContestDialog, ValidationError, legalActions } from "../src/contestDialog.js";
import type { ContestStateName, RoleName } from "../src/types.js";
import {
  CASE_ID,
  FLOW,
  LEGAL_ACTIONS,
  PREDICTION_ID,
  makeFixtureServer,
  makeForbiddenServer,
  makeStaleServer,
} from "./fixtureServer.js";

const STATES = Object.keys(LEGAL_ACTIONS) as ContestStateName[];
const ROLES = ["clinician", "system_delegate", "reviewer", "admin"] as RoleName[];

describe("legal action table", () => {
  it("matches the server's recorded transition table for every (state, role)", () => {
    expect(STATES.length).toBe(6);
    for (const state of STATES) {
      for (const role of ROLES) {
        expect(legalActions(state, role), `${state} x ${role}`).toEqual(
          LEGAL_ACTIONS[state]![role]!,
        );
      }
    }
  });
});

describe("contest dialog flow", () => {
  it("walks the recorded deliberation issuing calls in the contracted order", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");

    expect(dialog.enabledActions()).toEqual([]);
    await dialog.open("reasoning_flaw", "attribution is implausible");
    expect(dialog.state.phase.kind).toBe("case");
    expect(dialog.enabledActions()).toEqual(["accept", "recontest"]);

    await dialog.recontest("still implausible");
    expect(dialog.enabledActions()).toEqual(["accept", "recontest"]);

    await dialog.recontest("escalate");
    const escalated = dialog.state.phase;
    expect(escalated.kind === "case" && escalated.caseData.state).toBe("escalated");
    // clinician has nothing left; the case is under third-party review
    expect(dialog.enabledActions()).toEqual([]);

    const reviewer = new ContestDialog(api, PREDICTION_ID, "reviewer");
    await reviewer.load(CASE_ID);
    expect(reviewer.enabledActions()).toEqual(["resolve"]);
    await reviewer.resolve("amended", 2.5);
    const done = reviewer.state.phase;
    expect(done.kind === "case" && done.caseData.state).toBe("resolved");
    expect(reviewer.enabledActions()).toEqual([]);

    // the state-changing calls, in order, equal the recorded contract
    const posts = server.calls.filter((c) => c.method === "POST");
    expect(posts.map((c) => ({ method: c.method, path: c.path }))).toEqual(
      FLOW.map((s) => ({ method: s.method, path: s.path })),
    );
  });

  it("carries round-tagged justifications from the server responses", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    let phase = dialog.state.phase;
    expect(phase.kind === "case" && phase.caseData.justifications.length).toBe(1);
    await dialog.recontest("still implausible");
    phase = dialog.state.phase;
    expect(phase.kind === "case" && phase.caseData.justifications.length).toBe(2);
    expect(phase.kind === "case" && phase.caseData.round).toBe(2);
  });

  it("blocks submission without a note, before any network call", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await expect(dialog.open("factual_error", "   ")).rejects.toThrow(ValidationError);
    expect(server.calls).toEqual([]);
  });

  it("blocks submission without an argument type", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await expect(
      dialog.open("" as never, "note present"),
    ).rejects.toThrow(ValidationError);
    expect(server.calls).toEqual([]);
  });

  it("never offers an action the table forbids", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    await expect(dialog.resolve("upheld")).rejects.toThrow(ValidationError);
  });

  it("surfaces optimistic-concurrency failures as a reload prompt", async () => {
    const opened = FLOW[0]!.response as never;
    const api = new ApiClient("http://fixture", "tok", makeStaleServer(opened));
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    // a POST now collides with a concurrent update
    dialog.state = { ...dialog.state, phase: { kind: "case", caseData: opened } };
    await dialog.accept();
    expect(dialog.state.phase.kind).toBe("stale");
  });

  it("shows a role banner on 403", async () => {
    const api = new ApiClient("http://fixture", "tok", makeForbiddenServer());
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "note");
    expect(dialog.state.phase.kind).toBe("forbidden");
  });
});
