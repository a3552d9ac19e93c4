// Session Summary tab: per-feature color chips from the server's normative
// classification, a 10-second interval selector, and the raw VGRF waveform
// honoring the channel toggles.

import type { SessionFeaturesPayload, WindowPayload } from "./types.js";

const FEATURE_LABELS: Record<string, string> = {
  stride_time_s: "Stride time (s)",
  stance_fraction: "Stance fraction",
  cadence_steps_per_min: "Cadence (steps/min)",
  peak_force_n: "Peak force (N)",
  freeze_index: "Freeze index",
  step_count: "Steps",
};

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatValue(value: number | boolean): string {
  if (typeof value === "boolean") return value ? "yes" : "no";
  return Math.abs(value) >= 100 ? value.toFixed(0) : value.toPrecision(3);
}

/** One chip per feature; chip color is the server's band, verbatim. */
export function renderFeatureChips(
  session: SessionFeaturesPayload,
  windowIndex: number,
): string {
  const window = session.windows[windowIndex];
  if (!window) return `<p class="notice">no such window</p>`;
  const chips: string[] = [];
  for (const [name, value] of Object.entries(window.features)) {
    if (name === "no_steps") continue;
    const band = window.bands?.[name] ?? "green";
    const label = FEATURE_LABELS[name] ?? name;
    const range = session.baseline?.[name];
    const tooltip = range
      ? `${label}: ${formatValue(value)} (baseline ${formatValue(range[0])} to ${formatValue(range[2])})`
      : `${label}: ${formatValue(value)}`;
    chips.push(
      `<span class="chip chip-${band}" data-feature="${name}" ` +
        `title="${escapeHtml(tooltip)}">${escapeHtml(label)}: ${formatValue(value)}</span>`,
    );
  }
  const flagged = window.features["no_steps"] === true
    ? `<span class="chip chip-flag" data-feature="no_steps">no steps detected</span>`
    : "";
  return `<div class="chips" data-window="${windowIndex}">${chips.join("")}${flagged}</div>`;
}

/** Buttons for each 10-second interval of the session. */
export function renderIntervalSelector(windowCount: number, selected: number): string {
  const buttons: string[] = [];
  for (let k = 0; k < windowCount; k += 1) {
    const active = k === selected ? " active" : "";
    buttons.push(
      `<button class="interval${active}" data-action="select-window" data-window="${k}">` +
        `${k * 10}-${(k + 1) * 10}s</button>`,
    );
  }
  return `<div class="intervals">${buttons.join("")}</div>`;
}

export function renderChannelToggles(toggles: Record<string, boolean>): string {
  const boxes = Object.entries(toggles).map(
    ([name, on]) =>
      `<label class="toggle"><input type="checkbox" data-action="toggle-channel" ` +
      `data-channel="${name}"${on ? " checked" : ""}>${name}</label>`,
  );
  return `<div class="toggles">${boxes.join("")}</div>`;
}

const WAVE_W = 960;
const WAVE_H = 240;

/** SVG waveform with exactly one polyline per enabled channel. */
export function renderWaveform(
  window: WindowPayload,
  toggles: Record<string, boolean>,
): string {
  const names = Object.keys(window.channels).filter((name) => toggles[name] !== false);
  let peak = 1.0;
  for (const name of names) {
    for (const v of window.channels[name] ?? []) peak = Math.max(peak, v);
  }
  const traces: string[] = [];
  names.forEach((name, i) => {
    const series = window.channels[name] ?? [];
    const step = Math.max(1, Math.floor(series.length / WAVE_W));
    const points: string[] = [];
    for (let j = 0; j < series.length; j += step) {
      const x = (j / (series.length - 1)) * WAVE_W;
      const y = WAVE_H - (series[j]! / peak) * (WAVE_H - 8);
      points.push(`${x.toFixed(1)},${y.toFixed(1)}`);
    }
    const hue = Math.round((i / Math.max(1, names.length)) * 300);
    traces.push(
      `<polyline data-channel="${name}" fill="none" stroke="hsl(${hue},70%,45%)" ` +
        `stroke-width="1" points="${points.join(" ")}"><title>${name}</title></polyline>`,
    );
  });
  return (
    `<svg class="waveform" viewBox="0 0 ${WAVE_W} ${WAVE_H}" role="img" ` +
    `aria-label="VGRF waveform ${window.start_s}-${window.end_s}s">` +
    `${traces.join("")}</svg>`
  );
}
