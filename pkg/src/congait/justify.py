"""Rule-grounded textual justifications for staging predictions.

Justifications come from an optional provider-agnostic chat client; any
client error or absence degrades to a deterministic template. Both paths
cite at least one staging rule and one relevance channel.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from importlib import resources

import httpx

from .errors import CongaitError
from .explain import SensorRelevance
from .model import Prediction


class RuleBaseMissingStage(CongaitError):
    def __init__(self, stage: float) -> None:
        self.stage = stage
        super().__init__(f"rule base has no entry for stage {format_stage(stage)}")


class ExternalClientError(CongaitError):
    pass


class JustificationSource(str, Enum):
    EXTERNAL_MODEL = "external_model"
    FALLBACK = "fallback"


def format_stage(stage: float) -> str:
    return f"{stage:g}"


@dataclass(frozen=True)
class ClinicalRule:
    stage: float
    criteria_text: str
    gait_markers: tuple[str, ...]


@dataclass(frozen=True)
class RuleBase:
    rules: tuple[ClinicalRule, ...]

    def find(self, stage: float) -> ClinicalRule | None:
        for rule in self.rules:
            if rule.stage == stage:
                return rule
        return None

    def stages(self) -> tuple[float, ...]:
        return tuple(r.stage for r in self.rules)


def load_rulebase(text: str) -> RuleBase:
    doc = json.loads(text)
    rules = tuple(
        ClinicalRule(stage=float(entry["stage"]),
                     criteria_text=str(entry["criteria_text"]),
                     gait_markers=tuple(entry.get("gait_markers", ())))
        for entry in doc["rules"]
    )
    return RuleBase(rules=rules)


def default_rulebase() -> RuleBase:
    text = resources.files("congait.data").joinpath("hy_rules.json").read_text("utf-8")
    return load_rulebase(text)


def validate_rulebase(rulebase: RuleBase, class_labels: tuple[float, ...]) -> list[str]:
    """Empty list when every class label has exactly one non-empty rule."""
    errors = []
    seen: dict[float, int] = {}
    for rule in rulebase.rules:
        seen[rule.stage] = seen.get(rule.stage, 0) + 1
        if not rule.criteria_text.strip():
            errors.append(f"stage {format_stage(rule.stage)}: empty criteria text")
    for stage, count in seen.items():
        if count > 1:
            errors.append(f"stage {format_stage(stage)}: duplicated {count} times")
    for label in class_labels:
        if float(label) not in seen:
            errors.append(f"stage {format_stage(label)}: missing from rule base")
    return errors


@dataclass(frozen=True)
class ContestContext:
    argument_type: str
    note: str
    round: int


@dataclass(frozen=True)
class Justification:
    prediction_id: str | None
    contest_id: str | None
    text: str
    cited_rules: tuple[float, ...]
    cited_channels: tuple[str, ...]
    source: JustificationSource
    round: int
    degraded_reason: str | None = None


class ExternalClient:
    """Minimal chat-completion client: one POST per justification.

    Body is {model, messages:[system, user]}; the reply's first choice text is
    used verbatim. No retries by default; every call has a hard timeout.
    """

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout_s: float = 10.0, retries: int = 0,
                 transport: httpx.BaseTransport | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("CONGAIT_LLM_KEY")
        self.timeout_s = timeout_s
        self.retries = retries
        self._transport = transport

    def complete(self, system: str, user: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with httpx.Client(transport=self._transport,
                                  timeout=self.timeout_s) as client:
                    response = client.post(f"{self.base_url}/chat/completions",
                                           json=body, headers=headers)
                    response.raise_for_status()
                    payload = response.json()
                choice = payload["choices"][0]
                text = choice.get("message", {}).get("content") or choice.get("text")
                if not text:
                    raise ExternalClientError("empty completion text")
                return str(text)
            except ExternalClientError as e:
                last_error = e
            except Exception as e:  # noqa: BLE001 - wire errors all degrade the same way
                last_error = e
        raise ExternalClientError(f"external client failed: {last_error}")


def _prompt(prediction: Prediction, relevance: SensorRelevance, rule: ClinicalRule,
            contest: ContestContext | None) -> tuple[str, str]:
    stage = format_stage(prediction.predicted_stage)
    top_prob = max(prediction.probabilities)
    channels = ", ".join(relevance.ranking[:2])
    segments = "; ".join(
        f"{s.start_s:g}-{s.end_s:g}s" for s in relevance.top_segments) or "none"
    system = (
        "You assist clinicians reviewing automated Parkinson's gait staging. "
        "Justify the prediction strictly in terms of the provided staging "
        "criteria and the evidence channels."
    )
    lines = [
        f"Predicted Hoehn & Yahr stage: {stage} (probability {top_prob:.3f}).",
        f"Stage {stage} criteria: {rule.criteria_text}",
        f"Most relevant sensor channels: {channels}.",
        f"Most relevant time segments: {segments}.",
        f"Expected gait markers: {', '.join(rule.gait_markers) or 'none listed'}.",
    ]
    if contest is not None:
        lines.append(
            f"The clinician contests this prediction (round {contest.round}, "
            f"argument type: {contest.argument_type}): {contest.note}")
        lines.append("Respond to the contest while citing the criteria.")
    else:
        lines.append("Explain why the prediction is consistent with the criteria.")
    return system, "\n".join(lines)


def _fallback_text(prediction: Prediction, relevance: SensorRelevance,
                   rule: ClinicalRule, contest: ContestContext | None) -> str:
    stage = format_stage(prediction.predicted_stage)
    top_prob = max(prediction.probabilities)
    channel_phrase = " and ".join(relevance.ranking[:2])
    segments = ", ".join(
        f"{s.start_s:g}-{s.end_s:g}s" for s in relevance.top_segments) or "none"
    parts = [
        f"The model assigns Hoehn & Yahr stage {stage} with probability {top_prob:.3f}.",
        f"Stage {stage} criteria: {rule.criteria_text}",
        f"The prediction rests most on channels {channel_phrase}, "
        f"with relevance concentrated in segments {segments}.",
    ]
    if rule.gait_markers:
        parts.append(f"Gait markers consistent with this stage: "
                     f"{', '.join(rule.gait_markers)}.")
    if contest is not None:
        parts.append(
            f"In response to the round-{contest.round} {contest.argument_type} "
            f"contest (\"{contest.note}\"): the cited criteria and evidence "
            f"channels above remain the basis for this output; if the gait "
            f"record or clinical context contradicts them, escalation to a "
            f"reviewer is available.")
    return " ".join(parts)


def compose_justification(prediction: Prediction, relevance: SensorRelevance,
                          rulebase: RuleBase,
                          contest: ContestContext | None = None,
                          client: ExternalClient | None = None,
                          prediction_id: str | None = None,
                          contest_id: str | None = None) -> Justification:
    """Build a justification, degrading to the deterministic template on any
    external-client failure. Never raises for client errors."""
    rule = rulebase.find(float(prediction.predicted_stage))
    if rule is None:
        raise RuleBaseMissingStage(prediction.predicted_stage)

    round_no = contest.round if contest is not None else 1
    cited_channels = tuple(relevance.ranking[:2])
    degraded_reason = None

    if client is not None:
        system, user = _prompt(prediction, relevance, rule, contest)
        try:
            text = client.complete(system, user)
            citation = (f" [cites: stage {format_stage(rule.stage)} criteria; "
                        f"channels {', '.join(cited_channels)}]")
            return Justification(
                prediction_id=prediction_id,
                contest_id=contest_id,
                text=text + citation,
                cited_rules=(rule.stage,),
                cited_channels=cited_channels,
                source=JustificationSource.EXTERNAL_MODEL,
                round=round_no,
            )
        except ExternalClientError as e:
            degraded_reason = str(e)

    return Justification(
        prediction_id=prediction_id,
        contest_id=contest_id,
        text=_fallback_text(prediction, relevance, rule, contest),
        cited_rules=(rule.stage,),
        cited_channels=cited_channels,
        source=JustificationSource.FALLBACK,
        round=round_no,
        degraded_reason=degraded_reason,
    )
