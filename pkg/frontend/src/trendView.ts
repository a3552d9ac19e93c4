// Treatment Trend tab: severity line per session, medication event markers,
// and the shaded 95% forecast band beyond the last session. A missing
// forecast renders a notice instead of a band.

import type { TrendPayload } from "./types.js";

const W = 960;
const H = 300;
const PAD = 36;

function dayOffset(date: string, origin: string): number {
  return (Date.parse(date) - Date.parse(origin)) / 86_400_000;
}

export function renderTrend(trend: TrendPayload): string {
  if (trend.series.length === 0) {
    return `<p class="notice" data-role="empty">no predicted sessions yet for ` +
      `${trend.patient_id}</p>`;
  }
  const origin = trend.series[0]!.date;
  const xsAll = [
    ...trend.series.map((p) => dayOffset(p.date, origin)),
    ...(trend.forecast?.points.map((p) => dayOffset(p.date, origin)) ?? []),
    ...trend.events.map((e) => dayOffset(e.date, origin)),
  ];
  const ysAll = [
    ...trend.series.map((p) => p.severity),
    ...(trend.forecast?.points.flatMap((p) => [p.lower95, p.upper95]) ?? []),
  ];
  const xMax = Math.max(1, ...xsAll);
  const yMin = Math.min(0, ...ysAll);
  const yMax = Math.max(1, ...ysAll) * 1.05;

  const sx = (days: number) => PAD + (days / xMax) * (W - 2 * PAD);
  const sy = (v: number) => H - PAD - ((v - yMin) / (yMax - yMin)) * (H - 2 * PAD);

  const parts: string[] = [];

  if (trend.forecast) {
    const fc = trend.forecast;
    const upper = fc.points.map(
      (p) => `${sx(dayOffset(p.date, origin)).toFixed(1)},${sy(p.upper95).toFixed(1)}`,
    );
    const lower = [...fc.points]
      .reverse()
      .map((p) => `${sx(dayOffset(p.date, origin)).toFixed(1)},${sy(p.lower95).toFixed(1)}`);
    const last = trend.series[trend.series.length - 1]!;
    const anchor = `${sx(dayOffset(last.date, origin)).toFixed(1)},${sy(last.severity).toFixed(1)}`;
    parts.push(
      `<polygon data-role="forecast-band" fill="rgba(90,130,200,0.25)" stroke="none" ` +
        `points="${anchor} ${upper.join(" ")} ${lower.join(" ")}"/>`,
    );
    const line = fc.points.map(
      (p) => `${sx(dayOffset(p.date, origin)).toFixed(1)},${sy(p.predicted).toFixed(1)}`,
    );
    parts.push(
      `<polyline data-role="forecast-line" fill="none" stroke="#46a" ` +
        `stroke-dasharray="6 4" points="${anchor} ${line.join(" ")}"/>`,
    );
  }

  const severityPoints = trend.series.map(
    (p) => `${sx(dayOffset(p.date, origin)).toFixed(1)},${sy(p.severity).toFixed(1)}`,
  );
  parts.push(
    `<polyline data-role="severity-line" fill="none" stroke="#c33" stroke-width="2" ` +
      `points="${severityPoints.join(" ")}"/>`,
  );
  for (const p of trend.series) {
    parts.push(
      `<circle data-role="session-point" data-session="${p.session_id}" ` +
        `cx="${sx(dayOffset(p.date, origin)).toFixed(1)}" ` +
        `cy="${sy(p.severity).toFixed(1)}" r="4" fill="#c33">` +
        `<title>${p.session_id} (${p.date}): severity ${p.severity.toFixed(2)}</title>` +
        `</circle>`,
    );
  }

  for (const event of trend.events) {
    const x = sx(dayOffset(event.date, origin)).toFixed(1);
    parts.push(
      `<line data-role="medication-marker" data-label="${event.label}" ` +
        `x1="${x}" x2="${x}" y1="${PAD}" y2="${H - PAD}" ` +
        `stroke="#383" stroke-dasharray="2 3">` +
        `<title>${event.date}: ${event.label}${event.note ? ` (${event.note})` : ""}</title>` +
        `</line>`,
    );
  }

  const svg =
    `<svg class="trend" viewBox="0 0 ${W} ${H}" role="img" ` +
    `aria-label="severity trend for ${trend.patient_id}">${parts.join("")}</svg>`;
  const notice = trend.forecast
    ? ""
    : `<p class="notice" data-role="no-forecast">forecast unavailable: ` +
      `${trend.no_forecast_reason ?? "unknown"}</p>`;
  return svg + notice;
}
