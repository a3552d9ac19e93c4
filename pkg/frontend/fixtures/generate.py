"""Regenerate the recorded server fixtures the frontend tests run against.

Usage: python3 frontend/fixtures/generate.py

Spins up the real service on a throwaway store, drives the API, and records
responses verbatim. Rerun whenever the server contract changes.
"""

from __future__ import annotations

import itertools
import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from congait.contest import ContestState, Role, legal_actions
from congait.server import create_app
from congait.service import AppConfig, Principal, Service

HERE = Path(__file__).parent

CLIN = {"Authorization": "Bearer fix-clin"}
REV = {"Authorization": "Bearer fix-rev"}
ADM = {"Authorization": "Bearer fix-adm"}

PRINCIPALS = (
    Principal("clin-1", "Fixture Clinician", Role.CLINICIAN, "fix-clin"),
    Principal("rev-1", "Fixture Reviewer", Role.REVIEWER, "fix-rev"),
    Principal("adm-1", "Fixture Admin", Role.ADMIN, "fix-adm"),
)


def gait_text(seconds: float, seed: int) -> str:
    rng = np.random.default_rng(seed)
    rate = 100.0
    n = int(seconds * rate)
    t = np.arange(n) / rate
    forces = np.abs(rng.normal(50.0, 15.0, size=(18, n)))
    left = ((t - 0.5) % 2.0 < 1.0) & (t >= 0.5)
    right = ((t - 1.5) % 2.0 < 1.0) & (t >= 1.5)
    forces[16] = np.where(left, 680.0, 0.0) + rng.normal(0, 3.0, n).clip(min=0)
    forces[17] = np.where(right, 700.0, 0.0) + rng.normal(0, 3.0, n).clip(min=0)
    lines = []
    for i in range(n):
        fields = ["%.2f" % (i / rate)]
        fields.extend("%.2f" % v for v in forces[:, i])
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def record(client: TestClient, steps: list, method: str, path: str,
           headers: dict, body: dict | None = None):
    response = client.request(method, path, headers=headers, json=body)
    steps.append({
        "method": method,
        "path": path,
        "body": body,
        "status": response.status_code,
        "response": response.json(),
    })
    assert response.status_code < 400, response.text
    return response.json()


def main() -> None:
    with tempfile.TemporaryDirectory() as root:
        service = Service(AppConfig(store_root=root, principals=PRINCIPALS))
        client = TestClient(create_app(service))

        # control cohort for the baseline, then a patient with four sessions
        client.post("/sessions", headers=ADM, json={
            "patient_id": "ctrl-a", "session_id": "ctrl-1", "cohort": "Control",
            "date": "2026-01-02", "text": gait_text(30.0, seed=21)})
        for k in range(4):
            client.post("/sessions", headers=ADM, json={
                "patient_id": "pd-7", "session_id": f"walk-{k}", "cohort": "PD",
                "date": f"2026-01-{5 + 7 * k:02d}",
                "text": gait_text(30.0, seed=30 + k)})
            client.post(f"/sessions/walk-{k}/run", headers=CLIN)
        client.post("/patients/pd-7/medications", headers=ADM, json={
            "date": "2026-01-10", "label": "levodopa 100mg", "note": "baseline"})

        features = client.get("/sessions/walk-0/features", headers=CLIN).json()
        window0 = client.get("/sessions/walk-0/windows/0", headers=CLIN).json()
        trend = client.get("/patients/pd-7/trend?horizon=2", headers=CLIN).json()

        run = client.post("/sessions/walk-0/run", headers=CLIN).json()
        pid = run["pairs"][0]["prediction_id"]
        prediction = client.get(f"/predictions/{pid}", headers=CLIN).json()
        relevance = client.get(f"/predictions/{pid}/relevance", headers=CLIN).json()

        # contested deliberation, recorded step by step
        steps: list = []
        case = record(client, steps, "POST", f"/predictions/{pid}/contests",
                      CLIN, {"argument_type": "reasoning_flaw",
                             "note": "attribution is implausible"})
        cid = case["case_id"]
        case = record(client, steps, "POST", f"/contests/{cid}/decision", CLIN,
                      {"decision": "recontest", "note": "still implausible",
                       "expected_version": case["version"]})
        case = record(client, steps, "POST", f"/contests/{cid}/decision", CLIN,
                      {"decision": "recontest", "note": "escalate",
                       "expected_version": case["version"]})
        record(client, steps, "POST", f"/contests/{cid}/resolve", REV,
               {"verdict": "amended", "new_stage": 2.5,
                "expected_version": case["version"]})

        contract = {
            "legal_actions": {
                state.value: {
                    role.value: sorted(legal_actions(state, role))
                    for role in Role
                }
                for state in ContestState
            },
            "flow": steps,
        }

        out = {
            "session_features.json": features,
            "window0.json": window0,
            "trend.json": trend,
            "prediction.json": prediction,
            "relevance.json": relevance,
            "server_contract.json": contract,
        }
        for name, doc in out.items():
            path = HERE / name
            path.write_text(json.dumps(doc, indent=1))
            print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
