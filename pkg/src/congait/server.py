"""HTTP API over the application service.

All bodies are JSON. Authentication is a static bearer token mapped to a
principal from the config; the role table below is enforced per endpoint.

    GET  /health                              public
    POST /sessions                            admin
    GET  /sessions/{sid}/features             clinician
    GET  /sessions/{sid}/windows/{k}          clinician
    POST /sessions/{sid}/run                  clinician
    GET  /predictions/{pid}                   clinician
    GET  /predictions/{pid}/relevance         clinician
    POST /predictions/{pid}/contests          clinician
    GET  /contests/{cid}                      clinician, reviewer
    POST /contests/{cid}/decision             clinician
    POST /contests/{cid}/resolve              reviewer
    GET  /patients/{pid}/trend                clinician
    POST /patients/{pid}/medications          admin
    POST /cas/compute                         admin
    GET  /audit/verify                        reviewer, admin
    GET  /audit/export                        reviewer, admin
"""

from __future__ import annotations

import json
from datetime import date

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .audit import RangeOutOfBounds
from .cas import (
    DuplicateCriterion,
    ScoreOutOfRange,
    UnknownCriterion,
    WeightSumInvalid,
    report_to_json,
)
from .contest import (
    EmptyNote,
    ForbiddenRole,
    IllegalTransition,
    Role,
    RoundMismatch,
    StaleCase,
    UnknownPrediction,
)
from .errors import CongaitError
from .ingest import ParseError
from .justify import RuleBaseMissingStage
from .service import Principal, Service, UnknownContest
from .store import DuplicateSession, ModelNotLoaded, UnknownSession
from .trend import MedicationEvent, UnknownPatient

_NOT_FOUND = (UnknownSession, UnknownPrediction, UnknownPatient, UnknownContest)
_CONFLICT = (IllegalTransition, StaleCase, DuplicateSession, RoundMismatch)
_BAD_REQUEST = (ParseError, EmptyNote, RuleBaseMissingStage, ValueError,
                ScoreOutOfRange, WeightSumInvalid, DuplicateCriterion,
                UnknownCriterion)


class IngestBody(BaseModel):
    patient_id: str
    session_id: str
    cohort: str
    date: str | None = None
    text: str


class ContestBody(BaseModel):
    argument_type: str
    note: str


class DecisionBody(BaseModel):
    decision: str
    note: str | None = None
    expected_version: int | None = None


class ResolveBody(BaseModel):
    verdict: str
    new_stage: float | None = None
    expected_version: int | None = None


class MedicationBody(BaseModel):
    date: str
    label: str
    note: str = ""


class CasBody(BaseModel):
    ratings: dict
    config: str | None = None


def create_app(service: Service) -> FastAPI:
    app = FastAPI(title="congait", version=__version__)

    def principal_from(request: Request) -> Principal:
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="bearer token required")
        principal = service.principal_for_token(header.removeprefix("Bearer "))
        if principal is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return principal

    def require(*roles: Role):
        def dependency(request: Request) -> Principal:
            principal = principal_from(request)
            if principal.role not in roles:
                raise HTTPException(
                    status_code=403,
                    detail=f"role {principal.role.value!r} may not call this endpoint")
            return principal
        return dependency

    clinician = Depends(require(Role.CLINICIAN))
    reviewer = Depends(require(Role.REVIEWER))
    admin = Depends(require(Role.ADMIN))
    clinician_or_reviewer = Depends(require(Role.CLINICIAN, Role.REVIEWER))
    reviewer_or_admin = Depends(require(Role.REVIEWER, Role.ADMIN))

    @app.exception_handler(CongaitError)
    def handle_domain_error(request: Request, exc: CongaitError) -> JSONResponse:
        if isinstance(exc, _NOT_FOUND):
            status = 404
        elif isinstance(exc, ForbiddenRole):
            status = 403
        elif isinstance(exc, _CONFLICT):
            status = 409
        elif isinstance(exc, _BAD_REQUEST):
            status = 400
        elif isinstance(exc, ModelNotLoaded):
            status = 503
        else:
            status = 500
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "model_id": service.model.model_id if service.model else None,
        }

    @app.post("/sessions", status_code=201)
    def ingest(body: IngestBody, principal: Principal = admin) -> dict:
        session_date = (date.fromisoformat(body.date) if body.date
                        else date.today())
        return service.ingest_session(body.patient_id, body.session_id,
                                      body.text, body.cohort, session_date,
                                      principal)

    @app.get("/sessions/{session_id}/features")
    def features(session_id: str, principal: Principal = clinician) -> dict:
        return service.session_features(session_id)

    @app.get("/sessions/{session_id}/windows/{window_index}")
    def window(session_id: str, window_index: int,
               principal: Principal = clinician) -> dict:
        return service.get_window(session_id, window_index)

    @app.post("/sessions/{session_id}/run")
    def run(session_id: str, principal: Principal = clinician) -> dict:
        return service.pipeline_run(session_id, principal)

    @app.get("/predictions/{prediction_id}")
    def prediction(prediction_id: str, principal: Principal = clinician) -> dict:
        return service.get_prediction(prediction_id)

    @app.get("/predictions/{prediction_id}/relevance")
    def relevance(prediction_id: str, full: bool = False,
                  principal: Principal = clinician) -> dict:
        return service.get_relevance(prediction_id, include_matrix=full)

    @app.post("/predictions/{prediction_id}/contests", status_code=201)
    def open_contest(prediction_id: str, body: ContestBody,
                     principal: Principal = clinician) -> dict:
        case = service.open_contest(prediction_id, body.argument_type,
                                    body.note, principal)
        return service.case_to_dict(case, principal.role)

    @app.get("/contests/{case_id}")
    def get_contest(case_id: str,
                    principal: Principal = clinician_or_reviewer) -> dict:
        return service.case_to_dict(service.get_case(case_id), principal.role)

    @app.post("/contests/{case_id}/decision")
    def decide(case_id: str, body: DecisionBody,
               principal: Principal = clinician) -> dict:
        case = service.contest_decision(case_id, body.decision, body.note,
                                        principal,
                                        expected_version=body.expected_version)
        return service.case_to_dict(case, principal.role)

    @app.post("/contests/{case_id}/resolve")
    def resolve(case_id: str, body: ResolveBody,
                principal: Principal = reviewer) -> dict:
        case = service.resolve_contest(case_id, body.verdict, body.new_stage,
                                       principal,
                                       expected_version=body.expected_version)
        return service.case_to_dict(case, principal.role)

    @app.get("/patients/{patient_id}/trend")
    def trend(patient_id: str, horizon: int = 3,
              principal: Principal = clinician) -> dict:
        return service.trend_timeline(patient_id, horizon)

    @app.post("/patients/{patient_id}/medications", status_code=201)
    def medications(patient_id: str, body: MedicationBody,
                    principal: Principal = admin) -> dict:
        event = MedicationEvent(date=date.fromisoformat(body.date),
                                label=body.label, note=body.note)
        service.add_medication(patient_id, event, principal)
        return {"patient_id": patient_id, "added": body.label}

    @app.post("/cas/compute")
    def cas_compute(body: CasBody, principal: Principal = admin) -> dict:
        report = service.compute_cas_report(body.ratings, principal,
                                            config_text=body.config)
        return json.loads(report_to_json(report))

    @app.get("/audit/verify")
    def audit_verify(principal: Principal = reviewer_or_admin) -> dict:
        result = service.audit_verify()
        return {"ok": result.ok, "first_bad_index": result.first_bad_index,
                "reason": result.reason}

    @app.get("/audit/export")
    def audit_export(from_index: int = 0, to_index: int = 0,
                     principal: Principal = reviewer_or_admin) -> dict:
        try:
            return service.audit_export(from_index, to_index)
        except RangeOutOfBounds as e:
            raise HTTPException(status_code=400, detail=str(e)) from None

    return app
