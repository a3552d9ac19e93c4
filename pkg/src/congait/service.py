"""Application service tying the parsing, model, explanation, deliberation,
and audit modules together over a file store. The HTTP layer and the CLI are
both thin callers into this class.

Every state-changing operation appends audit events under the caller's
principal; contest transitions also land in the contest event log, from which
case state is rebuilt at startup.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import date, datetime, timezone
from importlib import resources
from pathlib import Path

from . import audit as audit_mod
from . import cas as cas_mod
from . import contest as contest_mod
from . import trend as trend_mod
from .audit import AuditEventKind, AuditLog
from .contest import ArgumentType, ContestCase, ContestState, Role, Verdict, VerdictKind
from .errors import CongaitError
from .explain import (
    Segment,
    SensorRelevance,
    aggregate_relevance,
    lrp,
    relevance_export,
)
from .ingest import (
    CHANNEL_NAMES,
    Cohort,
    GaitWindow,
    compute_baseline,
    extract_features,
    segment_windows,
)
from .justify import (
    ContestContext,
    ExternalClient,
    Justification,
    JustificationSource,
    compose_justification,
    default_rulebase,
)
from .model import ModelSpec, Prediction, load_model, predict
from .store import ModelNotLoaded, Store, StoreCorrupt, UnknownSession


class UnknownContest(CongaitError):
    def __init__(self, case_id: str) -> None:
        super().__init__(f"no such contest case: {case_id}")


@dataclass(frozen=True)
class ExternalClientConfig:
    base_url: str
    model: str
    timeout_s: float = 10.0
    retries: int = 0


@dataclass(frozen=True)
class Principal:
    id: str
    name: str
    role: Role
    token: str


DEFAULT_PRINCIPALS = (
    Principal("clin-1", "Dev Clinician", Role.CLINICIAN, "dev-clinician"),
    Principal("rev-1", "Dev Reviewer", Role.REVIEWER, "dev-reviewer"),
    Principal("adm-1", "Dev Admin", Role.ADMIN, "dev-admin"),
)

SYSTEM_PRINCIPAL = Principal("system", "System Delegate", Role.SYSTEM_DELEGATE, "")


@dataclass(frozen=True)
class AppConfig:
    port: int = 8077
    store_root: str = "."
    model_path: str | None = None  # packaged reference model when None
    max_rounds: int = contest_mod.DEFAULT_MAX_ROUNDS
    external: ExternalClientConfig | None = None
    principals: tuple[Principal, ...] = DEFAULT_PRINCIPALS


def load_config(path: str | Path | None = None) -> AppConfig:
    """Config file plus environment overrides (CONGAIT_* variables)."""
    doc: dict = {}
    if path is not None and Path(path).exists():
        doc = json.loads(Path(path).read_text("utf-8"))

    def env(name: str, fallback):
        return os.environ.get(name, fallback)

    external = None
    ext_doc = doc.get("external_client") or {}
    base_url = env("CONGAIT_LLM_URL", ext_doc.get("base_url"))
    if base_url:
        external = ExternalClientConfig(
            base_url=base_url,
            model=env("CONGAIT_LLM_MODEL", ext_doc.get("model", "gpt-4o")),
            timeout_s=float(env("CONGAIT_LLM_TIMEOUT",
                                ext_doc.get("timeout_s", 10.0))),
            retries=int(ext_doc.get("retries", 0)),
        )
    principals = tuple(
        Principal(p["id"], p.get("name", p["id"]), Role(p["role"]), p["token"])
        for p in doc.get("principals", ())
    ) or DEFAULT_PRINCIPALS
    return AppConfig(
        port=int(env("CONGAIT_PORT", doc.get("port", 8077))),
        store_root=str(env("CONGAIT_STORE_ROOT", doc.get("store_root", "."))),
        model_path=env("CONGAIT_MODEL_PATH", doc.get("model_path")),
        max_rounds=int(env("CONGAIT_MAX_ROUNDS",
                           doc.get("max_rounds", contest_mod.DEFAULT_MAX_ROUNDS))),
        external=external,
        principals=principals,
    )


def prediction_id_for(model_id: str, session_id: str, window_index: int) -> str:
    digest = hashlib.sha256(
        f"{model_id}:{session_id}:{window_index}".encode()).hexdigest()
    return digest[:16]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class Service:
    def __init__(self, config: AppConfig, allow_unverified: bool = False) -> None:
        self.config = config
        self.store = Store(config.store_root)
        result = audit_mod.verify(self.store.audit_path)
        if not result.ok and not allow_unverified:
            raise StoreCorrupt(
                f"audit log fails verification at index {result.first_bad_index} "
                f"({result.reason}); refusing to start")
        self.startup_verify = result
        self.audit = AuditLog(self.store.audit_path)
        self.rulebase = default_rulebase()
        self.model: ModelSpec | None = self._load_model(config.model_path)
        self.client = None
        if config.external is not None:
            self.client = ExternalClient(
                base_url=config.external.base_url,
                model=config.external.model,
                timeout_s=config.external.timeout_s,
                retries=config.external.retries,
            )
        self._lock = threading.RLock()
        self._cases: dict[str, ContestCase] = {}
        self._case_for_prediction: dict[str, str] = {}
        self._replay_contests()

    @staticmethod
    def _load_model(model_path: str | None) -> ModelSpec | None:
        if model_path is None:
            text = resources.files("congait.data").joinpath(
                "reference.model").read_text("utf-8")
            return load_model(text)
        path = Path(model_path)
        if not path.exists():
            return None
        return load_model(path.read_text("utf-8"))

    def principal_for_token(self, token: str) -> Principal | None:
        for principal in self.config.principals:
            if principal.token == token:
                return principal
        return None

    # -- contest event sourcing -----------------------------------------------

    def _replay_contests(self) -> None:
        for event in self.store.contest_events():
            case_id = event["case_id"]
            kind = event["kind"]
            data = event["data"]
            if kind == "opened":
                case = contest_mod.open_contest(
                    data["prediction_id"], ArgumentType(data["argument_type"]),
                    data["note"], Role.CLINICIAN,
                    known_predictions={data["prediction_id"]},
                    case_id=case_id, max_rounds=data["max_rounds"],
                    opened_by=data.get("opened_by", ""),
                    opened_at=data.get("opened_at", ""))
                self._cases[case_id] = case
                self._case_for_prediction[data["prediction_id"]] = case_id
            elif kind == "justified":
                j = data["justification"]
                justification = Justification(
                    prediction_id=j.get("prediction_id"),
                    contest_id=j.get("contest_id"),
                    text=j["text"],
                    cited_rules=tuple(j["cited_rules"]),
                    cited_channels=tuple(j["cited_channels"]),
                    source=JustificationSource(j["source"]),
                    round=j["round"])
                self._cases[case_id] = contest_mod.attach_justification(
                    self._cases[case_id], justification)
            elif kind == "decision":
                self._cases[case_id] = contest_mod.clinician_decision(
                    self._cases[case_id], data["decision"], Role.CLINICIAN,
                    note=data.get("note"))
            elif kind == "resolved":
                verdict = Verdict(VerdictKind(data["verdict"]),
                                  data.get("new_stage"))
                self._cases[case_id] = contest_mod.resolve_escalation(
                    self._cases[case_id], verdict, Role.REVIEWER)

    def _record_contest_event(self, case_id: str, kind: str, data: dict) -> None:
        self.store.append_contest_event({
            "case_id": case_id,
            "kind": kind,
            "at": _utc_now(),
            "data": data,
        })

    # -- ingest --------------------------------------------------------------

    def ingest_session(self, patient_id: str, session_id: str, text: str,
                       cohort: Cohort | str, session_date: date,
                       principal: Principal) -> dict:
        with self._lock:
            record = self.store.ingest_session(patient_id, session_id, text,
                                               cohort, session_date)
            self.audit.append(AuditEventKind.SESSION_INGESTED, principal.role,
                              principal.id, {
                                  "patient_id": patient_id,
                                  "session_id": session_id,
                                  "cohort": Cohort(cohort).value,
                                  "rows": record.n_samples,
                                  "clamped_count": record.clamped_count,
                              })
        return {
            "patient_id": patient_id,
            "session_id": session_id,
            "cohort": Cohort(cohort).value,
            "rows": record.n_samples,
            "sample_rate_hz": record.sample_rate_hz,
            "clamped_count": record.clamped_count,
            "window_count": len(segment_windows(record)),
        }

    # -- features / windows -----------------------------------------------------

    def _control_baseline(self):
        features = []
        for sid in self.store.control_session_ids():
            record = self.store.load_record(sid)
            for window in segment_windows(record):
                features.append(extract_features(window))
        if not features:
            return None
        return compute_baseline(features)

    def session_features(self, session_id: str) -> dict:
        record = self.store.load_record(session_id)
        meta = self.store.session_meta(session_id)
        baseline = self._control_baseline()
        windows = []
        for window in segment_windows(record):
            features = extract_features(window)
            bands = None
            if baseline is not None:
                bands = {name: baseline.classify(name, value).value
                         for name, value in features.as_dict().items()}
            windows.append({
                "window_index": window.window_index,
                "start_s": window.start_s,
                "end_s": window.end_s,
                "features": features.as_dict() | {"no_steps": features.no_steps},
                "bands": bands,
            })
        return {
            "session_id": session_id,
            "patient_id": meta["patient_id"],
            "cohort": meta["cohort"],
            "window_count": len(windows),
            "baseline": ({name: list(p) for name, p in baseline.percentiles.items()}
                         if baseline is not None else None),
            "windows": windows,
        }

    def get_window(self, session_id: str, window_index: int) -> dict:
        record = self.store.load_record(session_id)
        windows = segment_windows(record)
        if not 0 <= window_index < len(windows):
            raise UnknownSession(f"{session_id}[{window_index}]")
        window = windows[window_index]
        return {
            "session_id": session_id,
            "window_index": window_index,
            "start_s": window.start_s,
            "end_s": window.end_s,
            "sample_rate_hz": record.sample_rate_hz,
            "channels": {name: window.samples[i].tolist()
                         for i, name in enumerate(CHANNEL_NAMES)},
        }

    # -- pipeline ---------------------------------------------------------------

    def pipeline_run(self, session_id: str, principal: Principal) -> dict:
        if self.model is None:
            raise ModelNotLoaded()
        record = self.store.load_record(session_id)
        windows = segment_windows(record)
        pairs = []
        new_windows = 0
        with self._lock:
            for window in windows:
                pid = prediction_id_for(self.model.model_id, session_id,
                                        window.window_index)
                existing = self.store.prediction(pid)
                if existing is not None:
                    pairs.append(existing)
                    continue
                entry = self._predict_and_explain(pid, session_id, window,
                                                  principal)
                pairs.append(entry)
                new_windows += 1
        return {
            "session_id": session_id,
            "model_id": self.model.model_id,
            "pairs": pairs,
            "new_windows": new_windows,
        }

    def _predict_and_explain(self, prediction_id: str, session_id: str,
                             window: GaitWindow, principal: Principal) -> dict:
        prediction = predict(self.model, window)
        target = self.model.class_labels.index(prediction.predicted_stage)
        rmap = lrp(self.model, window, target, prediction=prediction)
        sensor = aggregate_relevance(rmap)
        entry = {
            "prediction_id": prediction_id,
            "session_id": session_id,
            "patient_id": window.record.patient_id,
            "window_index": window.window_index,
            "model_id": prediction.model_id,
            "created_at": prediction.created_at,
            "probabilities": list(prediction.probabilities),
            "logits": list(prediction.logits),
            "predicted_stage": prediction.predicted_stage,
            "relevance": relevance_export(rmap, sensor),
        }
        self.store.append_prediction(entry)
        self.audit.append(AuditEventKind.PREDICTION_ISSUED, principal.role,
                          principal.id, {
                              "prediction_id": prediction_id,
                              "session_id": session_id,
                              "window_index": window.window_index,
                              "model_id": prediction.model_id,
                              "predicted_stage": prediction.predicted_stage,
                          })
        self.audit.append(AuditEventKind.EXPLANATION_ISSUED, principal.role,
                          principal.id, {
                              "prediction_id": prediction_id,
                              "target_class": target,
                              "conv_rule": rmap.config.conv_rule.value,
                              "top_channel": sensor.ranking[0],
                          })
        return entry

    def get_prediction(self, prediction_id: str) -> dict:
        entry = self.store.prediction(prediction_id)
        if entry is None:
            raise contest_mod.UnknownPrediction(prediction_id)
        out = dict(entry)
        out.pop("relevance", None)
        case_id = self._case_for_prediction.get(prediction_id)
        if case_id is not None:
            case = self._cases[case_id]
            out["contest"] = {"case_id": case_id, "state": case.state.value}
            if case.verdict is not None:
                out["contest"]["verdict"] = case.verdict.kind.value
                if case.verdict.new_stage is not None:
                    out["amended_stage"] = case.verdict.new_stage
        return out

    def get_relevance(self, prediction_id: str, include_matrix: bool = False) -> dict:
        entry = self.store.prediction(prediction_id)
        if entry is None:
            raise contest_mod.UnknownPrediction(prediction_id)
        doc = dict(entry["relevance"])
        if include_matrix:
            if self.model is None or entry["model_id"] != self.model.model_id:
                raise ModelNotLoaded()
            record = self.store.load_record(entry["session_id"])
            window = segment_windows(record)[entry["window_index"]]
            rmap = lrp(self.model, window, doc["target_class"])
            doc["values"] = rmap.values.tolist()
        doc["prediction_id"] = prediction_id
        return doc

    # -- contest flow ----------------------------------------------------------

    def _sensor_from_entry(self, entry: dict) -> SensorRelevance:
        rel = entry["relevance"]
        return SensorRelevance(
            channel_sums=tuple(rel["channel_sums"]),
            ranking=tuple(rel["ranking"]),
            top_segments=tuple(Segment(s[0], s[1], s[2])
                               for s in rel["top_segments"]),
        )

    def _prediction_from_entry(self, entry: dict) -> Prediction:
        return Prediction(
            window=None,
            probabilities=tuple(entry["probabilities"]),
            logits=tuple(entry["logits"]),
            predicted_stage=entry["predicted_stage"],
            model_id=entry["model_id"],
            created_at=entry["created_at"],
        )

    def open_contest(self, prediction_id: str, argument_type: ArgumentType | str,
                     note: str, principal: Principal) -> ContestCase:
        with self._lock:
            entry = self.store.prediction(prediction_id)
            known = {prediction_id} if entry is not None else set()
            if prediction_id in self._case_for_prediction:
                raise contest_mod.IllegalTransition(
                    self._cases[self._case_for_prediction[prediction_id]].state,
                    "open_contest")
            case_id = f"c-{prediction_id}"
            case = contest_mod.open_contest(
                prediction_id, argument_type, note, principal.role,
                known_predictions=known, case_id=case_id,
                max_rounds=self.config.max_rounds, opened_by=principal.id,
                opened_at=_utc_now())
            self._cases[case_id] = case
            self._case_for_prediction[prediction_id] = case_id
            self._record_contest_event(case_id, "opened", {
                "prediction_id": prediction_id,
                "argument_type": case.argument_type.value,
                "note": note,
                "max_rounds": case.max_rounds,
                "opened_by": principal.id,
                "opened_at": case.opened_at,
            })
            self.audit.append(AuditEventKind.CONTEST_OPENED, principal.role,
                              principal.id, {
                                  "case_id": case_id,
                                  "prediction_id": prediction_id,
                                  "argument_type": case.argument_type.value,
                              })
            return self._auto_justify(case_id, entry)

    def _auto_justify(self, case_id: str, entry: dict) -> ContestCase:
        case = self._cases[case_id]
        context = ContestContext(argument_type=case.argument_type.value,
                                 note=case.notes[-1], round=case.round)
        justification = compose_justification(
            self._prediction_from_entry(entry), self._sensor_from_entry(entry),
            self.rulebase, contest=context, client=self.client,
            prediction_id=case.prediction_id, contest_id=case_id)
        self.audit.append(AuditEventKind.JUSTIFICATION_ISSUED,
                          SYSTEM_PRINCIPAL.role, SYSTEM_PRINCIPAL.id, {
                              "case_id": case_id,
                              "prediction_id": case.prediction_id,
                              "round": justification.round,
                              "source": justification.source.value,
                          })
        if justification.degraded_reason is not None:
            self.audit.append(AuditEventKind.EXTERNAL_CLIENT_DEGRADED,
                              SYSTEM_PRINCIPAL.role, SYSTEM_PRINCIPAL.id, {
                                  "case_id": case_id,
                                  "reason": justification.degraded_reason,
                              })
        before = case.state
        case = contest_mod.attach_justification(case, justification)
        self._cases[case_id] = case
        self._record_contest_event(case_id, "justified", {
            "justification": {
                "prediction_id": justification.prediction_id,
                "contest_id": justification.contest_id,
                "text": justification.text,
                "cited_rules": list(justification.cited_rules),
                "cited_channels": list(justification.cited_channels),
                "source": justification.source.value,
                "round": justification.round,
            },
        })
        self.audit.append(AuditEventKind.CONTEST_TRANSITION,
                          SYSTEM_PRINCIPAL.role, SYSTEM_PRINCIPAL.id, {
                              "case_id": case_id,
                              "from": before.value,
                              "to": case.state.value,
                              "round": case.round,
                          })
        return case

    def get_case(self, case_id: str) -> ContestCase:
        case = self._cases.get(case_id)
        if case is None:
            raise UnknownContest(case_id)
        return case

    def contest_decision(self, case_id: str, decision: str, note: str | None,
                         principal: Principal,
                         expected_version: int | None = None) -> ContestCase:
        with self._lock:
            case = self.get_case(case_id)
            before = case.state
            case = contest_mod.clinician_decision(
                case, decision, principal.role, note=note,
                expected_version=expected_version)
            self._cases[case_id] = case
            self._record_contest_event(case_id, "decision", {
                "decision": decision,
                "note": note,
            })
            self.audit.append(AuditEventKind.CONTEST_TRANSITION, principal.role,
                              principal.id, {
                                  "case_id": case_id,
                                  "from": before.value,
                                  "to": case.state.value,
                                  "round": case.round,
                              })
            if case.state is ContestState.RECONTESTED:
                entry = self.store.prediction(case.prediction_id)
                case = self._auto_justify(case_id, entry)
            return case

    def resolve_contest(self, case_id: str, verdict_kind: VerdictKind | str,
                        new_stage: float | None, principal: Principal,
                        expected_version: int | None = None) -> ContestCase:
        with self._lock:
            case = self.get_case(case_id)
            verdict = Verdict(VerdictKind(verdict_kind), new_stage)
            before = case.state
            case = contest_mod.resolve_escalation(
                case, verdict, principal.role, expected_version=expected_version)
            self._cases[case_id] = case
            self._record_contest_event(case_id, "resolved", {
                "verdict": verdict.kind.value,
                "new_stage": verdict.new_stage,
            })
            self.audit.append(AuditEventKind.CONTEST_TRANSITION, principal.role,
                              principal.id, {
                                  "case_id": case_id,
                                  "from": before.value,
                                  "to": case.state.value,
                                  "verdict": verdict.kind.value,
                              })
            return case

    def case_to_dict(self, case: ContestCase, role: Role | None = None) -> dict:
        out = {
            "case_id": case.case_id,
            "prediction_id": case.prediction_id,
            "state": case.state.value,
            "argument_type": case.argument_type.value,
            "notes": list(case.notes),
            "round": case.round,
            "max_rounds": case.max_rounds,
            "version": case.version,
            "opened_by": case.opened_by,
            "opened_at": case.opened_at,
            "justifications": [
                {"text": j.text, "round": j.round, "source": j.source.value,
                 "cited_rules": list(j.cited_rules),
                 "cited_channels": list(j.cited_channels)}
                for j in case.justifications
            ],
            "verdict": None if case.verdict is None else {
                "kind": case.verdict.kind.value,
                "new_stage": case.verdict.new_stage,
            },
        }
        if role is not None:
            out["available_actions"] = sorted(
                contest_mod.legal_actions(case.state, role))
        return out

    # -- trend -----------------------------------------------------------------

    def trend_timeline(self, patient_id: str, horizon: int) -> dict:
        series = trend_mod.session_series(patient_id, self._trend_store_view())
        events = self.store.medications(patient_id)
        merged = trend_mod.overlay(series, events)
        fc = trend_mod.forecast(series, horizon)
        return {
            "patient_id": patient_id,
            "series": [
                {"session_id": p.session_id, "date": p.date.isoformat(),
                 "severity": p.severity, "window_count": p.window_count,
                 "mean_features": p.mean_features}
                for p in series
            ],
            "events": [
                {"date": e.date.isoformat(), "label": e.label, "note": e.note}
                for e in events
            ],
            "timeline": [
                {"kind": t.kind, "date": t.date.isoformat(),
                 "session_id": t.session.session_id if t.session else None,
                 "label": t.event.label if t.event else None,
                 "after_session": t.after_session}
                for t in merged
            ],
            "forecast": None if fc is None else {
                "method": fc.method,
                "slope": fc.slope,
                "intercept": fc.intercept,
                "residual_sd": fc.residual_sd,
                "points": [
                    {"date": p.date.isoformat(), "predicted": p.predicted,
                     "lower95": p.lower95, "upper95": p.upper95}
                    for p in fc.points
                ],
            },
            "no_forecast_reason": (None if fc is not None
                                   else "fewer than 3 predicted sessions"),
        }

    def _trend_store_view(self):
        service = self

        class _View:
            def patient_exists(self, patient_id: str) -> bool:
                return service.store.patient_exists(patient_id)

            def sessions_for_patient(self, patient_id: str):
                return service.store.sessions_for_patient(patient_id)

            def window_probabilities(self, session_id: str):
                labels = (service.model.class_labels if service.model is not None
                          else ())
                return [(entry["probabilities"], labels)
                        for entry in service.store.predictions_for_session(session_id)]

            def window_features(self, session_id: str):
                record = service.store.load_record(session_id)
                return [extract_features(w) for w in segment_windows(record)]

        return _View()

    def add_medication(self, patient_id: str, event: trend_mod.MedicationEvent,
                       principal: Principal) -> None:
        with self._lock:
            if not self.store.patient_exists(patient_id):
                raise trend_mod.UnknownPatient(patient_id)
            self.store.add_medication(patient_id, event)
            self.audit.append(AuditEventKind.MEDICATION_ADDED, principal.role,
                              principal.id, {
                                  "patient_id": patient_id,
                                  "label": event.label,
                                  "date": event.date.isoformat(),
                              })

    # -- cas ---------------------------------------------------------------------

    def compute_cas_report(self, ratings: dict, principal: Principal,
                           config_text: str | None = None) -> cas_mod.CasReport:
        with self._lock:
            templates = (cas_mod.load_cas_config(config_text)
                         if config_text is not None
                         else cas_mod.default_cas_config())
            criteria = cas_mod.apply_ratings(templates, ratings)
            report = cas_mod.compute_cas(criteria)
            self.audit.append(AuditEventKind.CAS_COMPUTED, principal.role,
                              principal.id, {
                                  "total": report.total,
                                  "display_total": report.display_total,
                                  "config_hash": report.config_hash,
                              })
            return report

    # -- audit ---------------------------------------------------------------------

    def audit_verify(self) -> audit_mod.VerifyResult:
        return audit_mod.verify(self.store.audit_path)

    def audit_export(self, from_index: int, to_index: int) -> dict:
        return audit_mod.export_range(self.audit, from_index, to_index)
