// Payload shapes of the congait HTTP API, as consumed by the dashboard.

export type Band = "green" | "amber" | "red";

export type ContestStateName =
  | "open"
  | "justified"
  | "accepted"
  | "recontested"
  | "escalated"
  | "resolved";

export type RoleName = "clinician" | "system_delegate" | "reviewer" | "admin";

export type ArgumentTypeName =
  | "factual_error"
  | "normative_conflict"
  | "reasoning_flaw";

export interface WindowFeaturesPayload {
  window_index: number;
  start_s: number;
  end_s: number;
  features: Record<string, number | boolean>;
  bands: Record<string, Band> | null;
}

export interface SessionFeaturesPayload {
  session_id: string;
  patient_id: string;
  cohort: string;
  window_count: number;
  baseline: Record<string, [number, number, number]> | null;
  windows: WindowFeaturesPayload[];
}

export interface WindowPayload {
  session_id: string;
  window_index: number;
  start_s: number;
  end_s: number;
  sample_rate_hz: number;
  channels: Record<string, number[]>;
}

export interface PredictionPayload {
  prediction_id: string;
  session_id: string;
  patient_id: string;
  window_index: number;
  model_id: string;
  created_at: string;
  probabilities: number[];
  logits: number[];
  predicted_stage: number;
  amended_stage?: number;
  contest?: { case_id: string; state: ContestStateName; verdict?: string };
}

export interface RelevancePayload {
  prediction_id: string;
  shape: [number, number];
  target_class: number;
  rule: { epsilon: number; conv_rule: string };
  channel_sums: number[];
  ranking: string[];
  top_segments: [number, number, number][];
  values?: number[][];
}

export interface JustificationPayload {
  text: string;
  round: number;
  source: "external_model" | "fallback";
  cited_rules: number[];
  cited_channels: string[];
}

export interface ContestCasePayload {
  case_id: string;
  prediction_id: string;
  state: ContestStateName;
  argument_type: ArgumentTypeName;
  notes: string[];
  round: number;
  max_rounds: number;
  version: number;
  justifications: JustificationPayload[];
  verdict: { kind: string; new_stage: number | null } | null;
  available_actions?: string[];
}

export interface SessionPointPayload {
  session_id: string;
  date: string;
  severity: number;
  window_count: number;
  mean_features: Record<string, number>;
}

export interface MedicationPayload {
  date: string;
  label: string;
  note: string;
}

export interface ForecastPayload {
  method: string;
  slope: number;
  intercept: number;
  residual_sd: number;
  points: { date: string; predicted: number; lower95: number; upper95: number }[];
}

export interface TrendPayload {
  patient_id: string;
  series: SessionPointPayload[];
  events: MedicationPayload[];
  timeline: {
    kind: "session" | "medication";
    date: string;
    session_id: string | null;
    label: string | null;
    after_session: string | null;
  }[];
  forecast: ForecastPayload | null;
  no_forecast_reason: string | null;
}

export interface RunPayload {
  session_id: string;
  model_id: string;
  pairs: { prediction_id: string; window_index: number; predicted_stage: number }[];
  new_windows: number;
}

export interface ApiError {
  status: number;
  error?: string;
  detail?: string;
}
