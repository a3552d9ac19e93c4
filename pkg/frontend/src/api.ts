// Thin typed client over the service API. All writes in the app go through
// these POST helpers; there is no other mutation path.

import type {
  ContestCasePayload,
  PredictionPayload,
  RelevancePayload,
  RunPayload,
  SessionFeaturesPayload,
  TrendPayload,
  WindowPayload,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiCallError extends Error {
  constructor(
    public readonly status: number,
    public readonly errorName: string,
    detail: string,
  ) {
    super(`${status} ${errorName}: ${detail}`);
  }

  get isStale(): boolean {
    return this.status === 409 && this.errorName === "StaleCase";
  }

  get isForbidden(): boolean {
    return this.status === 403;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    };
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiCallError(
        response.status,
        (payload as { error?: string }).error ?? "HttpError",
        (payload as { detail?: string }).detail ?? response.statusText,
      );
    }
    return payload as T;
  }

  health(): Promise<{ status: string; model_id: string | null }> {
    return this.request("GET", "/health");
  }

  sessionFeatures(sessionId: string): Promise<SessionFeaturesPayload> {
    return this.request("GET", `/sessions/${sessionId}/features`);
  }

  window(sessionId: string, index: number): Promise<WindowPayload> {
    return this.request("GET", `/sessions/${sessionId}/windows/${index}`);
  }

  run(sessionId: string): Promise<RunPayload> {
    return this.request("POST", `/sessions/${sessionId}/run`);
  }

  prediction(predictionId: string): Promise<PredictionPayload> {
    return this.request("GET", `/predictions/${predictionId}`);
  }

  relevance(predictionId: string, full = false): Promise<RelevancePayload> {
    const suffix = full ? "?full=true" : "";
    return this.request("GET", `/predictions/${predictionId}/relevance${suffix}`);
  }

  openContest(
    predictionId: string,
    argumentType: string,
    note: string,
  ): Promise<ContestCasePayload> {
    return this.request("POST", `/predictions/${predictionId}/contests`, {
      argument_type: argumentType,
      note,
    });
  }

  contestCase(caseId: string): Promise<ContestCasePayload> {
    return this.request("GET", `/contests/${caseId}`);
  }

  decide(
    caseId: string,
    decision: "accept" | "recontest",
    note: string | null,
    expectedVersion: number,
  ): Promise<ContestCasePayload> {
    return this.request("POST", `/contests/${caseId}/decision`, {
      decision,
      note,
      expected_version: expectedVersion,
    });
  }

  resolve(
    caseId: string,
    verdict: string,
    newStage: number | null,
    expectedVersion: number,
  ): Promise<ContestCasePayload> {
    return this.request("POST", `/contests/${caseId}/resolve`, {
      verdict,
      new_stage: newStage,
      expected_version: expectedVersion,
    });
  }

  trend(patientId: string, horizon: number): Promise<TrendPayload> {
    return this.request("GET", `/patients/${patientId}/trend?horizon=${horizon}`);
  }
}
