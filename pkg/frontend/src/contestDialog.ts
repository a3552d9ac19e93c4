// Contest & Justify dialog controller.
//
// The action table below mirrors the server's transition table exactly and is
// contract-tested against a recorded server fixture; the dialog never offers
// an action the server would reject for the case's state and the caller's
// role. Optimistic-concurrency failures surface as a reload prompt rather
// than an error.

import { ApiCallError, ApiClient } from "./api.js";
import type {
  ArgumentTypeName,
  ContestCasePayload,
  ContestStateName,
  RoleName,
} from "./types.js";

export const ARGUMENT_TYPES: { value: ArgumentTypeName; label: string; help: string }[] = [
  { value: "factual_error", label: "Factual Error", help: "incorrect input" },
  {
    value: "normative_conflict",
    label: "Normative Conflict",
    help: "mismatch with clinical context",
  },
  {
    value: "reasoning_flaw",
    label: "Reasoning Flaw",
    help: "implausible attribution",
  },
];

export type ServerAction = "accept" | "recontest" | "resolve" | "attach_justification";

/** Mirror of the server's legal-transition table, per (state, role). */
export function legalActions(state: ContestStateName, role: RoleName): ServerAction[] {
  const actions: ServerAction[] = [];
  if ((state === "open" || state === "recontested") && role === "system_delegate") {
    actions.push("attach_justification");
  }
  if (state === "justified" && role === "clinician") {
    actions.push("accept", "recontest");
  }
  if (state === "escalated" && role === "reviewer") {
    actions.push("resolve");
  }
  return actions.sort();
}

export type DialogPhase =
  | { kind: "picker" } // choose argument type + note, nothing submitted yet
  | { kind: "case"; caseData: ContestCasePayload }
  | { kind: "stale"; caseData: ContestCasePayload } // updated elsewhere, reload
  | { kind: "forbidden"; message: string };

export interface DialogState {
  predictionId: string;
  role: RoleName;
  phase: DialogPhase;
  validationError: string | null;
}

export class ValidationError extends Error {}

export class ContestDialog {
  state: DialogState;
  readonly calls: { method: string; path: string }[] = [];

  constructor(
    private readonly api: ApiClient,
    predictionId: string,
    role: RoleName,
  ) {
    this.state = {
      predictionId,
      role,
      phase: { kind: "picker" },
      validationError: null,
    };
  }

  /** Buttons the dialog may enable right now (terminal states offer none). */
  enabledActions(): ServerAction[] {
    const phase = this.state.phase;
    if (phase.kind !== "case" && phase.kind !== "stale") return [];
    return legalActions(phase.caseData.state, this.state.role);
  }

  private validateNote(note: string, argumentType?: string): void {
    if (argumentType !== undefined) {
      const known = ARGUMENT_TYPES.some((t) => t.value === argumentType);
      if (!known) {
        throw new ValidationError("choose exactly one argument type");
      }
    }
    if (!note.trim()) {
      throw new ValidationError("a note is required");
    }
  }

  private async guarded(action: () => Promise<ContestCasePayload>): Promise<void> {
    try {
      const caseData = await action();
      this.state = { ...this.state, phase: { kind: "case", caseData }, validationError: null };
    } catch (error) {
      if (error instanceof ApiCallError && error.isStale) {
        const current = this.state.phase;
        if (current.kind === "case" || current.kind === "stale") {
          this.state = { ...this.state, phase: { kind: "stale", caseData: current.caseData } };
          return;
        }
      }
      if (error instanceof ApiCallError && error.isForbidden) {
        this.state = {
          ...this.state,
          phase: { kind: "forbidden", message: error.message },
        };
        return;
      }
      throw error;
    }
  }

  /** Submit the initial contest; blocked client-side without type and note. */
  async open(argumentType: ArgumentTypeName, note: string): Promise<void> {
    this.validateNote(note, argumentType);
    this.calls.push({ method: "POST", path: `/predictions/${this.state.predictionId}/contests` });
    await this.guarded(() => this.api.openContest(this.state.predictionId, argumentType, note));
  }

  async accept(): Promise<void> {
    const caseData = this.requireCase("accept");
    this.calls.push({ method: "POST", path: `/contests/${caseData.case_id}/decision` });
    await this.guarded(() => this.api.decide(caseData.case_id, "accept", null, caseData.version));
  }

  async recontest(note: string): Promise<void> {
    const caseData = this.requireCase("recontest");
    this.validateNote(note);
    this.calls.push({ method: "POST", path: `/contests/${caseData.case_id}/decision` });
    await this.guarded(() =>
      this.api.decide(caseData.case_id, "recontest", note, caseData.version),
    );
  }

  async resolve(verdict: string, newStage: number | null = null): Promise<void> {
    const caseData = this.requireCase("resolve");
    this.calls.push({ method: "POST", path: `/contests/${caseData.case_id}/resolve` });
    await this.guarded(() =>
      this.api.resolve(caseData.case_id, verdict, newStage, caseData.version),
    );
  }

  /** Poll the server copy of the case (2 s cadence while the dialog is open). */
  async refresh(): Promise<void> {
    const phase = this.state.phase;
    if (phase.kind !== "case" && phase.kind !== "stale") return;
    const caseData = await this.api.contestCase(phase.caseData.case_id);
    this.state = { ...this.state, phase: { kind: "case", caseData } };
  }

  /** Attach to an existing case (e.g. a reviewer opening an escalation). */
  async load(caseId: string): Promise<void> {
    const caseData = await this.api.contestCase(caseId);
    this.state = { ...this.state, phase: { kind: "case", caseData }, validationError: null };
  }

  private requireCase(action: ServerAction): ContestCasePayload {
    const phase = this.state.phase;
    if (phase.kind !== "case") {
      throw new ValidationError(`no active case to ${action}`);
    }
    if (!this.enabledActions().includes(action)) {
      throw new ValidationError(
        `${action} is not available in state ${phase.caseData.state} for ${this.state.role}`,
      );
    }
    return phase.caseData;
  }
}
