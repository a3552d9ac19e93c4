"""Longitudinal severity series, medication overlay, and OLS forecasting.

Per-session severity is the probability-weighted expected stage averaged over
the session's predicted windows. Forecasts fit ordinary least squares on the
session ordinal and extend a 95% band of +/- 1.96 residual standard
deviations (n-2 denominator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Protocol, Sequence

import numpy as np

from .errors import CongaitError
from .ingest import FEATURE_NAMES, WindowFeatures

Z_95 = 1.96
MIN_SESSIONS_FOR_FORECAST = 3


class UnknownPatient(CongaitError):
    def __init__(self, patient_id: str) -> None:
        super().__init__(f"no such patient: {patient_id}")


@dataclass(frozen=True)
class SessionPoint:
    session_id: str
    date: date
    severity: float
    mean_features: dict[str, float]
    window_count: int


@dataclass(frozen=True)
class MedicationEvent:
    date: date
    label: str
    note: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("medication label must not be empty")


@dataclass(frozen=True)
class ForecastPoint:
    date: date
    predicted: float
    lower95: float
    upper95: float


@dataclass(frozen=True)
class Forecast:
    points: tuple[ForecastPoint, ...]
    method: str
    slope: float
    intercept: float
    residual_sd: float


@dataclass(frozen=True)
class TimelineEntry:
    kind: str  # "session" | "medication"
    date: date
    session: SessionPoint | None = None
    event: MedicationEvent | None = None
    after_session: str | None = None  # session id or "pre-baseline"


def expected_stage(probabilities: Sequence[float],
                   class_labels: Sequence[float]) -> float:
    """Probability-weighted stage over the class set."""
    return float(sum(p * s for p, s in zip(probabilities, class_labels)))


class SessionStore(Protocol):
    """What session_series needs from a store."""

    def patient_exists(self, patient_id: str) -> bool: ...

    def sessions_for_patient(self, patient_id: str) -> list[tuple[str, date]]: ...

    def window_probabilities(self, session_id: str) -> list[tuple[Sequence[float],
                                                                  Sequence[float]]]: ...

    def window_features(self, session_id: str) -> list[WindowFeatures]: ...


def session_series(patient_id: str, store: SessionStore) -> list[SessionPoint]:
    """One date-ordered point per session that has at least one prediction."""
    if not store.patient_exists(patient_id):
        raise UnknownPatient(patient_id)
    points = []
    for session_id, session_date in store.sessions_for_patient(patient_id):
        predicted = store.window_probabilities(session_id)
        if not predicted:
            continue
        severities = [expected_stage(probs, labels) for probs, labels in predicted]
        features = store.window_features(session_id)
        mean_features = {
            name: float(np.mean([f.as_dict()[name] for f in features]))
            for name in FEATURE_NAMES
        } if features else {}
        points.append(SessionPoint(
            session_id=session_id,
            date=session_date,
            severity=float(np.mean(severities)),
            mean_features=mean_features,
            window_count=len(predicted),
        ))
    points.sort(key=lambda p: (p.date, p.session_id))
    return points


def ols_fit(y: Sequence[float]) -> tuple[float, float, float]:
    """(slope, intercept, residual sd) for y against ordinals 0..n-1.

    Residual sd uses the n-2 denominator; exact fits give 0.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    n = y_arr.shape[0]
    x = np.arange(n, dtype=np.float64)
    x_mean, y_mean = x.mean(), y_arr.mean()
    sxx = float(((x - x_mean) ** 2).sum())
    sxy = float(((x - x_mean) * (y_arr - y_mean)).sum())
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    residuals = y_arr - (intercept + slope * x)
    ssr = float((residuals ** 2).sum())
    sd = math.sqrt(max(ssr, 0.0) / (n - 2)) if n > 2 else 0.0
    return slope, intercept, sd


def forecast(series: Sequence[SessionPoint],
             horizon_sessions: int) -> Forecast | None:
    """Linear extrapolation with a 95% residual band; None below 3 sessions.

    Future points are spaced at the median inter-session interval.
    """
    if len(series) < MIN_SESSIONS_FOR_FORECAST or horizon_sessions < 1:
        return None
    severities = [p.severity for p in series]
    slope, intercept, sd = ols_fit(severities)
    gaps = [(b.date - a.date).days for a, b in zip(series, series[1:])]
    spacing = int(np.median(gaps)) if gaps else 0
    n = len(series)
    last_date = series[-1].date
    points = []
    for j in range(1, horizon_sessions + 1):
        predicted = intercept + slope * (n - 1 + j)
        points.append(ForecastPoint(
            date=last_date + timedelta(days=spacing * j),
            predicted=predicted,
            lower95=predicted - Z_95 * sd,
            upper95=predicted + Z_95 * sd,
        ))
    return Forecast(points=tuple(points), method="ols_linear",
                    slope=slope, intercept=intercept, residual_sd=sd)


def overlay(series: Sequence[SessionPoint],
            events: Sequence[MedicationEvent]) -> list[TimelineEntry]:
    """Date-merged timeline; each event is tagged with the nearest session at
    or before its date, or "pre-baseline" when none exists."""
    entries = [TimelineEntry(kind="session", date=p.date, session=p)
               for p in series]
    for event in events:
        preceding = [p for p in series if p.date <= event.date]
        after = preceding[-1].session_id if preceding else "pre-baseline"
        entries.append(TimelineEntry(kind="medication", date=event.date,
                                     event=event, after_session=after))
    # sessions sort before same-day events
    entries.sort(key=lambda e: (e.date, 0 if e.kind == "session" else 1))
    return entries
