"""Contestability assessment scoring.

The total is a weighted sum of normalized criterion scores: each criterion
contributes weight * score / max_score, weights summing to 1. The stored
total is unrounded; display formatting rounds to three decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from importlib import resources

from .canonical import content_hash
from .errors import CongaitError

WEIGHT_SUM_TOLERANCE = 1e-9


class WeightSumInvalid(CongaitError):
    def __init__(self, total: float) -> None:
        super().__init__(f"criterion weights sum to {total!r}, expected 1")


class ScoreOutOfRange(CongaitError):
    def __init__(self, name: str, score: float, max_score: float) -> None:
        self.name = name
        super().__init__(f"{name}: score {score!r} outside [0, {max_score!r}]")


class DuplicateCriterion(CongaitError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"duplicate criterion: {name}")


class UnknownCriterion(CongaitError):
    def __init__(self, name: str) -> None:
        super().__init__(f"criterion not in config: {name}")


class ScoreBasis(str, Enum):
    OBSERVED = "observed"
    PERSONA_RATED = "persona_rated"


@dataclass(frozen=True)
class CasCriterion:
    name: str
    max_score: float
    weight: float
    score: float
    basis: ScoreBasis = ScoreBasis.OBSERVED
    notes: str = ""


@dataclass(frozen=True)
class CriterionTemplate:
    name: str
    max_score: float
    weight: float


@dataclass(frozen=True)
class CasReport:
    criteria: tuple[CasCriterion, ...]
    contributions: tuple[float, ...]
    total: float
    computed_at: str
    config_hash: str

    @property
    def display_total(self) -> str:
        return f"{self.total:.3f}"

    def display_contributions(self) -> tuple[str, ...]:
        return tuple(f"{c:.3f}" for c in self.contributions)


def _validate_weights(weights: list[float]) -> None:
    total = sum(weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise WeightSumInvalid(total)


def compute_cas(criteria: list[CasCriterion] | tuple[CasCriterion, ...],
                computed_at: str | None = None) -> CasReport:
    """Weighted normalized total over the supplied criterion scores."""
    criteria = tuple(criteria)
    _validate_weights([c.weight for c in criteria])
    for c in criteria:
        if c.weight <= 0:
            raise WeightSumInvalid(c.weight)
        if c.max_score <= 0:
            raise ScoreOutOfRange(c.name, c.score, c.max_score)
        if not (0.0 <= c.score <= c.max_score):
            raise ScoreOutOfRange(c.name, c.score, c.max_score)
    contributions = tuple(c.weight * c.score / c.max_score for c in criteria)
    config_hash = content_hash(
        [{"name": c.name, "max_score": c.max_score, "weight": c.weight}
         for c in criteria])
    return CasReport(
        criteria=criteria,
        contributions=contributions,
        total=sum(contributions),
        computed_at=computed_at if computed_at is not None
        else datetime.now(timezone.utc).isoformat(timespec="microseconds"),
        config_hash=config_hash,
    )


def load_cas_config(document: str) -> list[CriterionTemplate]:
    """Parse a criteria config (names, maxima, weights); scores stay empty."""
    doc = json.loads(document)
    templates = []
    seen = set()
    for entry in doc["criteria"]:
        name = str(entry["name"])
        if name in seen:
            raise DuplicateCriterion(name)
        seen.add(name)
        templates.append(CriterionTemplate(
            name=name,
            max_score=float(entry["max_score"]),
            weight=float(entry["weight"]),
        ))
    _validate_weights([t.weight for t in templates])
    return templates


def default_cas_config() -> list[CriterionTemplate]:
    text = resources.files("congait.data").joinpath("cas_criteria.json").read_text("utf-8")
    return load_cas_config(text)


def apply_ratings(templates: list[CriterionTemplate], ratings: dict) -> list[CasCriterion]:
    """Fill a config template with scores from a ratings mapping.

    Each rating is either a bare number or {score, basis?, notes?}. Every
    template criterion must be rated; unknown names are rejected.
    """
    known = {t.name for t in templates}
    for name in ratings:
        if name not in known:
            raise UnknownCriterion(name)
    criteria = []
    for t in templates:
        if t.name not in ratings:
            raise UnknownCriterion(f"{t.name} (missing rating)")
        raw = ratings[t.name]
        if isinstance(raw, dict):
            score = float(raw["score"])
            basis = ScoreBasis(raw.get("basis", ScoreBasis.OBSERVED.value))
            notes = str(raw.get("notes", ""))
        else:
            score, basis, notes = float(raw), ScoreBasis.OBSERVED, ""
        criteria.append(CasCriterion(name=t.name, max_score=t.max_score,
                                     weight=t.weight, score=score,
                                     basis=basis, notes=notes))
    return criteria


def report_to_json(report: CasReport) -> str:
    return json.dumps({
        "criteria": [
            {"name": c.name, "max_score": c.max_score, "weight": c.weight,
             "score": c.score, "basis": c.basis.value, "notes": c.notes}
            for c in report.criteria
        ],
        "contributions": list(report.contributions),
        "total": report.total,
        "display_total": report.display_total,
        "computed_at": report.computed_at,
        "config_hash": report.config_hash,
    }, indent=2)


def report_from_json(text: str) -> CasReport:
    doc = json.loads(text)
    criteria = tuple(
        CasCriterion(name=e["name"], max_score=e["max_score"], weight=e["weight"],
                     score=e["score"], basis=ScoreBasis(e["basis"]),
                     notes=e.get("notes", ""))
        for e in doc["criteria"]
    )
    return CasReport(
        criteria=criteria,
        contributions=tuple(doc["contributions"]),
        total=doc["total"],
        computed_at=doc["computed_at"],
        config_hash=doc["config_hash"],
    )
