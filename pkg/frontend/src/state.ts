// Dashboard view state. The server is the source of truth; this is only what
// the active browser tab is looking at.

import type { RoleName } from "./types.js";

export const TABS = ["session_summary", "treatment_trend", "predictive_insight"] as const;
export type Tab = (typeof TABS)[number];

export const CHANNEL_NAMES = [
  "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8",
  "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8",
  "LTotal", "RTotal",
] as const;
export type ChannelName = (typeof CHANNEL_NAMES)[number];

export interface ViewState {
  activeTab: Tab;
  role: RoleName;
  selectedSession: string | null;
  selectedWindow: number;
  channelToggles: Record<string, boolean>;
}

export function initialState(role: RoleName): ViewState {
  const toggles: Record<string, boolean> = {};
  for (const name of CHANNEL_NAMES) toggles[name] = true;
  return {
    activeTab: "session_summary",
    role,
    selectedSession: null,
    selectedWindow: 0,
    channelToggles: toggles,
  };
}

export function setActiveTab(state: ViewState, tab: Tab): ViewState {
  return { ...state, activeTab: tab };
}

export function selectWindow(state: ViewState, index: number): ViewState {
  return { ...state, selectedWindow: Math.max(0, index) };
}

export function toggleChannel(state: ViewState, channel: string): ViewState {
  if (!(channel in state.channelToggles)) return state;
  return {
    ...state,
    channelToggles: { ...state.channelToggles, [channel]: !state.channelToggles[channel] },
  };
}

export function enabledChannels(state: ViewState): string[] {
  return CHANNEL_NAMES.filter((name) => state.channelToggles[name]);
}
