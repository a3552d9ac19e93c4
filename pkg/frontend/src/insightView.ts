// Predictive Insight tab: the dual explanation (relevance heatmap plus the
// textual justification stream) around the stage prediction, and the
// Contest & Justify dialog markup.

import { ARGUMENT_TYPES } from "./contestDialog.js";
import type { ContestDialog } from "./contestDialog.js";
import type {
  ContestCasePayload,
  PredictionPayload,
  RelevancePayload,
} from "./types.js";

const STAGE_LABELS = ["0", "2", "2.5", "3"];

export function renderPrediction(prediction: PredictionPayload): string {
  const bars = prediction.probabilities
    .map((p, i) => {
      const label = STAGE_LABELS[i] ?? String(i);
      return (
        `<div class="prob-row"><span class="prob-label">stage ${label}</span>` +
        `<div class="prob-bar"><div class="prob-fill" style="width:${(p * 100).toFixed(1)}%"></div></div>` +
        `<span class="prob-value">${(p * 100).toFixed(1)}%</span></div>`
      );
    })
    .join("");
  const amended = prediction.amended_stage !== undefined
    ? `<p class="amended" data-role="amended">amended to stage ` +
      `${prediction.amended_stage} after review</p>`
    : "";
  return (
    `<div class="prediction" data-prediction="${prediction.prediction_id}">` +
    `<h3>Predicted stage ${prediction.predicted_stage}</h3>${bars}${amended}</div>`
  );
}

/** Diverging color centered at zero: negative blue, positive red. */
export function colorFor(value: number, absMax: number): string {
  if (absMax <= 0) return "rgb(255,255,255)";
  const t = Math.max(-1, Math.min(1, value / absMax));
  const other = Math.round(255 * (1 - Math.abs(t)));
  return t >= 0
    ? `rgb(255,${other},${other})`
    : `rgb(${other},${other},255)`;
}

/** Channel-by-time grid; columns are averaged down to at most `bins`. */
export function renderHeatmap(relevance: RelevancePayload, bins = 100): string {
  const values = relevance.values;
  if (!values || values.length === 0) {
    return `<p class="notice">relevance matrix not loaded</p>`;
  }
  const length = values[0]!.length;
  const width = Math.min(bins, length);
  const per = Math.floor(length / width);
  const binned = values.map((row) => {
    const out: number[] = [];
    for (let b = 0; b < width; b += 1) {
      let sum = 0;
      for (let j = b * per; j < Math.min((b + 1) * per, length); j += 1) {
        sum += row[j]!;
      }
      out.push(sum / per);
    }
    return out;
  });
  let absMax = 0;
  for (const row of binned) for (const v of row) absMax = Math.max(absMax, Math.abs(v));

  const cell = 9;
  const labelW = 52;
  const rows = binned
    .map((row, c) => {
      const cells = row
        .map(
          (v, b) =>
            `<rect data-cell="${c}:${b}" x="${labelW + b * cell}" y="${c * cell}" ` +
            `width="${cell}" height="${cell}" fill="${colorFor(v, absMax)}"/>`,
        )
        .join("");
      const name = relevance.ranking.length === 18 ? channelName(c) : String(c);
      return (
        `<text x="0" y="${c * cell + cell - 1}" font-size="8">${name}</text>` + cells
      );
    })
    .join("");
  return (
    `<svg class="heatmap" viewBox="0 0 ${labelW + width * cell} ${18 * cell}" ` +
    `role="img" aria-label="relevance heatmap">${rows}</svg>`
  );
}

function channelName(index: number): string {
  const names = [
    "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8",
    "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8",
    "LTotal", "RTotal",
  ];
  return names[index] ?? String(index);
}

export function renderTopEvidence(relevance: RelevancePayload): string {
  const channels = relevance.ranking.slice(0, 3).join(", ");
  const segments = relevance.top_segments
    .map(([a, b]) => `${a}-${b}s`)
    .join(", ");
  return (
    `<p class="evidence">strongest channels: <b>${channels}</b>; ` +
    `strongest segments: <b>${segments}</b></p>`
  );
}

export function renderJustifications(caseData: ContestCasePayload): string {
  const items = caseData.justifications
    .map(
      (j) =>
        `<li class="justification" data-round="${j.round}" data-source="${j.source}">` +
        `<span class="round-tag">round ${j.round}</span> ${j.text}</li>`,
    )
    .join("");
  return `<ol class="justifications">${items}</ol>`;
}

/** Dialog body: picker first, then the case with only-legal actions. */
export function renderDialog(dialog: ContestDialog): string {
  const { phase, validationError } = dialog.state;
  const error = validationError
    ? `<p class="error" data-role="validation">${validationError}</p>`
    : "";

  if (phase.kind === "picker") {
    const options = ARGUMENT_TYPES.map(
      (t) =>
        `<label class="argtype"><input type="radio" name="argument_type" ` +
        `value="${t.value}"> <b>${t.label}</b> <small>${t.help}</small></label>`,
    ).join("");
    return (
      `<div class="dialog" data-phase="picker">${options}` +
      `<textarea data-role="note" placeholder="Why do you contest this prediction?"></textarea>` +
      `${error}<button data-action="submit-contest">Contest</button></div>`
    );
  }

  if (phase.kind === "forbidden") {
    return (
      `<div class="dialog" data-phase="forbidden"><p class="banner" data-role="role-banner">` +
      `${phase.message}</p></div>`
    );
  }

  const caseData = phase.caseData;
  if (phase.kind === "stale") {
    return (
      `<div class="dialog" data-phase="stale"><p class="banner" data-role="stale-banner">` +
      `case updated elsewhere - reload</p>` +
      `<button data-action="reload-case">Reload</button></div>`
    );
  }

  const actions = dialog.enabledActions();
  const buttons: string[] = [];
  if (actions.includes("accept")) {
    buttons.push(`<button data-action="accept">Accept</button>`);
  }
  if (actions.includes("recontest")) {
    buttons.push(
      `<textarea data-role="recontest-note" placeholder="What is still wrong?"></textarea>` +
        `<button data-action="recontest">Contest again</button>`,
    );
  }
  if (actions.includes("resolve")) {
    buttons.push(
      `<select data-role="verdict"><option>upheld</option>` +
        `<option>overturned</option><option>amended</option></select>` +
        `<button data-action="resolve">Resolve</button>`,
    );
  }
  const readOnly =
    caseData.state === "escalated" && buttons.length === 0
      ? `<p class="banner" data-role="under-review">under review by a third party</p>`
      : "";
  const terminal =
    caseData.state === "accepted" || caseData.state === "resolved"
      ? `<span class="badge badge-terminal" data-role="terminal">${caseData.state}</span>`
      : "";
  return (
    `<div class="dialog" data-phase="case" data-state="${caseData.state}" ` +
    `data-round="${caseData.round}">` +
    `<h4>Contest ${caseData.case_id} <em>(${caseData.argument_type}, round ` +
    `${caseData.round}/${caseData.max_rounds})</em> ${terminal}</h4>` +
    renderJustifications(caseData) +
    `${error}${readOnly}<div class="actions">${buttons.join("")}</div></div>`
  );
}
