"""File-backed persistence: session files, model files, append-only indices.

Layout under the store root:
    patients/<pid>/sessions/<sid>.vgrf        raw 19-column recordings
    patients/<pid>/sessions/<sid>.meta.json   cohort, date, parse metadata
    patients/<pid>/medications.json           medication event list
    models/<id>.model                         model documents
    store/audit.log                           hash-chained audit log
    store/contests.events                     contest transitions (JSONL)
    store/predictions.index                   prediction records (JSONL)

All writes go through this layer; the event files are append-only.
"""

from __future__ import annotations

import json
import threading
from datetime import date
from pathlib import Path

from .errors import CongaitError
from .ingest import Cohort, GaitRecord, parse_vgrf
from .trend import MedicationEvent


class UnknownSession(CongaitError):
    def __init__(self, session_id: str) -> None:
        super().__init__(f"no such session: {session_id}")


class DuplicateSession(CongaitError):
    def __init__(self, session_id: str) -> None:
        super().__init__(f"session already ingested: {session_id}")


class ModelNotLoaded(CongaitError):
    def __init__(self) -> None:
        super().__init__("no model is loaded")


class StoreCorrupt(CongaitError):
    pass


class Store:
    """Owns the on-disk layout. Thread-safe for the single-writer pattern."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        (self.root / "patients").mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(parents=True, exist_ok=True)
        (self.root / "store").mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._records: dict[str, GaitRecord] = {}
        self._predictions: dict[str, dict] | None = None
        self._session_index: dict[str, Path] | None = None

    # -- paths ---------------------------------------------------------------

    @property
    def audit_path(self) -> Path:
        return self.root / "store" / "audit.log"

    @property
    def contests_path(self) -> Path:
        return self.root / "store" / "contests.events"

    @property
    def predictions_path(self) -> Path:
        return self.root / "store" / "predictions.index"

    def _session_file(self, patient_id: str, session_id: str) -> Path:
        return self.root / "patients" / patient_id / "sessions" / f"{session_id}.vgrf"

    # -- sessions ------------------------------------------------------------

    def _scan_sessions(self) -> dict[str, Path]:
        with self._lock:
            if self._session_index is None:
                index = {}
                for path in sorted((self.root / "patients").glob("*/sessions/*.vgrf")):
                    index[path.stem] = path
                self._session_index = index
            return self._session_index

    def ingest_session(self, patient_id: str, session_id: str, text: str,
                       cohort: Cohort | str, session_date: date) -> GaitRecord:
        record = parse_vgrf(text, patient_id=patient_id, session_id=session_id,
                            cohort=cohort)
        with self._lock:
            path = self._session_file(patient_id, session_id)
            if path.exists() or session_id in self._scan_sessions():
                raise DuplicateSession(session_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, "utf-8")
            meta = {
                "patient_id": patient_id,
                "session_id": session_id,
                "cohort": Cohort(cohort).value,
                "date": session_date.isoformat(),
                "clamped_count": record.clamped_count,
                "rows": record.n_samples,
            }
            path.with_suffix(".meta.json").write_text(
                json.dumps(meta, indent=2), "utf-8")
            self._session_index[session_id] = path
            self._records[session_id] = record
        return record

    def session_exists(self, session_id: str) -> bool:
        return session_id in self._scan_sessions()

    def session_meta(self, session_id: str) -> dict:
        path = self._scan_sessions().get(session_id)
        if path is None:
            raise UnknownSession(session_id)
        return json.loads(path.with_suffix(".meta.json").read_text("utf-8"))

    def load_record(self, session_id: str) -> GaitRecord:
        with self._lock:
            if session_id in self._records:
                return self._records[session_id]
        path = self._scan_sessions().get(session_id)
        if path is None:
            raise UnknownSession(session_id)
        meta = self.session_meta(session_id)
        record = parse_vgrf(path.read_text("utf-8"),
                            patient_id=meta["patient_id"],
                            session_id=session_id,
                            cohort=meta["cohort"])
        with self._lock:
            self._records[session_id] = record
        return record

    def patient_exists(self, patient_id: str) -> bool:
        return (self.root / "patients" / patient_id).is_dir()

    def patients(self) -> list[str]:
        return sorted(p.name for p in (self.root / "patients").iterdir()
                      if p.is_dir())

    def sessions_for_patient(self, patient_id: str) -> list[tuple[str, date]]:
        out = []
        for session_id, path in self._scan_sessions().items():
            if path.parent.parent.name != patient_id:
                continue
            meta = self.session_meta(session_id)
            out.append((session_id, date.fromisoformat(meta["date"])))
        out.sort(key=lambda item: (item[1], item[0]))
        return out

    def control_session_ids(self) -> list[str]:
        return [sid for sid in sorted(self._scan_sessions())
                if self.session_meta(sid)["cohort"] == Cohort.CONTROL.value]

    # -- medications -----------------------------------------------------------

    def _medications_path(self, patient_id: str) -> Path:
        return self.root / "patients" / patient_id / "medications.json"

    def medications(self, patient_id: str) -> list[MedicationEvent]:
        path = self._medications_path(patient_id)
        if not path.exists():
            return []
        events = []
        for entry in json.loads(path.read_text("utf-8")):
            events.append(MedicationEvent(date=date.fromisoformat(entry["date"]),
                                          label=entry["label"],
                                          note=entry.get("note", "")))
        return events

    def add_medication(self, patient_id: str, event: MedicationEvent) -> None:
        with self._lock:
            path = self._medications_path(patient_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            existing = json.loads(path.read_text("utf-8")) if path.exists() else []
            existing.append({"date": event.date.isoformat(), "label": event.label,
                             "note": event.note})
            path.write_text(json.dumps(existing, indent=2), "utf-8")

    # -- predictions index -------------------------------------------------------

    def _load_predictions(self) -> dict[str, dict]:
        with self._lock:
            if self._predictions is None:
                loaded: dict[str, dict] = {}
                if self.predictions_path.exists():
                    for line in self.predictions_path.read_text("utf-8").splitlines():
                        if line:
                            entry = json.loads(line)
                            loaded[entry["prediction_id"]] = entry
                self._predictions = loaded
            return self._predictions

    def prediction(self, prediction_id: str) -> dict | None:
        return self._load_predictions().get(prediction_id)

    def predictions_for_session(self, session_id: str) -> list[dict]:
        entries = [e for e in self._load_predictions().values()
                   if e["session_id"] == session_id]
        entries.sort(key=lambda e: e["window_index"])
        return entries

    def append_prediction(self, entry: dict) -> None:
        with self._lock:
            cache = self._load_predictions()
            if entry["prediction_id"] in cache:
                return
            with open(self.predictions_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
            cache[entry["prediction_id"]] = entry

    # -- contest events ------------------------------------------------------

    def contest_events(self) -> list[dict]:
        if not self.contests_path.exists():
            return []
        events = []
        for line in self.contests_path.read_text("utf-8").splitlines():
            if line:
                events.append(json.loads(line))
        return events

    def append_contest_event(self, event: dict) -> None:
        with self._lock:
            with open(self.contests_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, separators=(",", ":")) + "\n")
