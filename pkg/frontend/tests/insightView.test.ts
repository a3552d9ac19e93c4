import { describe, expect, it } from "vitest";

import predictionFixture from "../fixtures/prediction.json";
import relevanceFixture from "../fixtures/relevance.json";

import { ApiClient } from "../src/api.js";
import { ContestDialog } from "../src/contestDialog.js";
import {
  colorFor,
  renderDialog,
  renderHeatmap,
  renderPrediction,
  renderTopEvidence,
} from "../src/insightView.js";
import type { PredictionPayload, RelevancePayload } from "../src/types.js";
import { FLOW, PREDICTION_ID, makeFixtureServer } from "./fixtureServer.js";

const prediction = predictionFixture as unknown as PredictionPayload;
const relevance = relevanceFixture as unknown as RelevancePayload;

describe("prediction panel", () => {
  it("shows the stage and one probability bar per class", () => {
    const html = renderPrediction(prediction);
    expect(html).toContain(`Predicted stage ${prediction.predicted_stage}`);
    expect((html.match(/prob-row/g) ?? []).length).toBe(
      prediction.probabilities.length,
    );
  });

  it("lists the strongest channels and segments", () => {
    const html = renderTopEvidence(relevance);
    expect(html).toContain(relevance.ranking[0]!);
  });
});

describe("relevance heatmap", () => {
  it("uses a diverging scale centered at zero", () => {
    expect(colorFor(0, 1)).toBe("rgb(255,255,255)");
    expect(colorFor(1, 1)).toBe("rgb(255,0,0)");
    expect(colorFor(-1, 1)).toBe("rgb(0,0,255)");
    // midway positive stays reddish, midway negative bluish
    expect(colorFor(0.5, 1)).toMatch(/^rgb\(255,/);
    expect(colorFor(-0.5, 1)).toMatch(/,255\)$/);
  });

  it("renders an 18-row grid from a full matrix", () => {
    const values = Array.from({ length: 18 }, (_, c) =>
      Array.from({ length: 1000 }, (_, t) => Math.sin(c + t / 50)),
    );
    const html = renderHeatmap({ ...relevance, values }, 50);
    expect((html.match(/<rect/g) ?? []).length).toBe(18 * 50);
  });

  it("asks for the matrix when it is missing", () => {
    expect(renderHeatmap({ ...relevance, values: undefined })).toContain(
      "not loaded",
    );
  });
});

describe("dialog rendering", () => {
  it("picker lists the three argument types with their definitions", () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    const html = renderDialog(dialog);
    expect(html).toContain("Factual Error");
    expect(html).toContain("incorrect input");
    expect(html).toContain("Normative Conflict");
    expect(html).toContain("mismatch with clinical context");
    expect(html).toContain("Reasoning Flaw");
    expect(html).toContain("implausible attribution");
    expect(html).toContain(`data-action="submit-contest"`);
  });

  it("renders only the legal buttons for the case state and role", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    const html = renderDialog(dialog);
    expect(html).toContain(`data-action="accept"`);
    expect(html).toContain(`data-action="recontest"`);
    expect(html).not.toContain(`data-action="resolve"`);
  });

  it("shows the read-only under-review state after escalation", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    await dialog.recontest("still implausible");
    await dialog.recontest("escalate");
    const html = renderDialog(dialog);
    expect(html).toContain(`data-state="escalated"`);
    expect(html).toContain(`data-role="under-review"`);
    expect(html).not.toContain(`data-action="accept"`);
  });

  it("shows a terminal badge once resolved", () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "reviewer");
    const resolved = FLOW[FLOW.length - 1]!.response as never;
    dialog.state = { ...dialog.state, phase: { kind: "case", caseData: resolved } };
    const html = renderDialog(dialog);
    expect(html).toContain(`data-role="terminal"`);
    expect(html).not.toContain("data-action=");
  });

  it("renders the stale banner with a reload control", async () => {
    const server = makeFixtureServer();
    const api = new ApiClient("http://fixture", "tok", server.fetch);
    const dialog = new ContestDialog(api, PREDICTION_ID, "clinician");
    await dialog.open("reasoning_flaw", "attribution is implausible");
    const phase = dialog.state.phase;
    if (phase.kind !== "case") throw new Error("expected case");
    dialog.state = { ...dialog.state, phase: { kind: "stale", caseData: phase.caseData } };
    const html = renderDialog(dialog);
    expect(html).toContain("case updated elsewhere - reload");
    expect(html).toContain(`data-action="reload-case"`);
  });
});
