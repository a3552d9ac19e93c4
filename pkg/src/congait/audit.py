"""Immutable, hash-chained, append-only audit log.

One JSON entry per LF-terminated line, fields in fixed order: index,
timestamp, actor, event_kind, payload, prev_hash, hash. Each entry's hash is
SHA-256 over prev_hash concatenated with the canonical JSON of the first five
fields; entry 0 chains from 64 zeros. Nothing in this package ever rewrites
or truncates a committed entry.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .contest import Role
from .errors import CongaitError

GENESIS_HASH = "0" * 64


class AuditEventKind(str, Enum):
    PREDICTION_ISSUED = "PredictionIssued"
    EXPLANATION_ISSUED = "ExplanationIssued"
    JUSTIFICATION_ISSUED = "JustificationIssued"
    CONTEST_OPENED = "ContestOpened"
    CONTEST_TRANSITION = "ContestTransition"
    CAS_COMPUTED = "CasComputed"
    CONFIG_CHANGED = "ConfigChanged"
    EXTERNAL_CLIENT_DEGRADED = "ExternalClientDegraded"
    SESSION_INGESTED = "SessionIngested"
    MEDICATION_ADDED = "MedicationAdded"


class StorageFailure(CongaitError):
    pass


class RangeOutOfBounds(CongaitError):
    def __init__(self, from_index: int, to_index: int, length: int) -> None:
        super().__init__(
            f"range [{from_index}, {to_index}] out of bounds for log of length {length}")


@dataclass(frozen=True)
class AuditEntry:
    index: int
    timestamp: str
    actor_role: str
    actor_id: str
    event_kind: str
    payload: dict
    prev_hash: str
    hash: str

    def to_line(self) -> str:
        record = {
            "index": self.index,
            "timestamp": self.timestamp,
            "actor": {"role": self.actor_role, "id": self.actor_id},
            "event_kind": self.event_kind,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }
        return json.dumps(record, separators=(",", ":"), ensure_ascii=False,
                          allow_nan=False)


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_bad_index: int | None = None
    reason: str | None = None


def _canonical_body(index: int, timestamp: str, actor_role: str, actor_id: str,
                    event_kind: str, payload: dict) -> str:
    return json.dumps(
        {
            "actor": {"id": actor_id, "role": actor_role},
            "event_kind": event_kind,
            "index": index,
            "payload": payload,
            "timestamp": timestamp,
        },
        sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def entry_hash(index: int, timestamp: str, actor_role: str, actor_id: str,
               event_kind: str, payload: dict, prev_hash: str) -> str:
    body = _canonical_body(index, timestamp, actor_role, actor_id, event_kind, payload)
    return hashlib.sha256(prev_hash.encode("ascii") + body.encode("utf-8")).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _parse_line(line: str) -> AuditEntry:
    record = json.loads(line)
    actor = record["actor"]
    return AuditEntry(
        index=int(record["index"]),
        timestamp=str(record["timestamp"]),
        actor_role=str(actor["role"]),
        actor_id=str(actor["id"]),
        event_kind=str(record["event_kind"]),
        payload=record["payload"],
        prev_hash=str(record["prev_hash"]),
        hash=str(record["hash"]),
    )


class AuditLog:
    """File-backed append-only log. Single writer, any number of readers."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._next_index = 0
        self._last_hash = GENESIS_HASH
        if self.path.exists():
            # resume from the last parseable entry; damaged lines stay on disk
            # and remain tamper-evident through verify()
            for raw in self.path.read_bytes().split(b"\n"):
                if not raw:
                    continue
                try:
                    entry = _parse_line(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
                        ValueError, TypeError):
                    continue
                self._next_index = entry.index + 1
                self._last_hash = entry.hash

    def __len__(self) -> int:
        return self._next_index

    @property
    def last_hash(self) -> str:
        return self._last_hash

    def append(self, event_kind: AuditEventKind | str, actor_role: Role | str,
               actor_id: str, payload: dict,
               timestamp: str | None = None) -> AuditEntry:
        """Append one entry durably; on failure no partial entry remains."""
        kind = AuditEventKind(event_kind).value
        role = Role(actor_role).value
        ts = timestamp if timestamp is not None else _utc_now()
        index = self._next_index
        prev = self._last_hash
        digest = entry_hash(index, ts, role, actor_id, kind, payload, prev)
        entry = AuditEntry(index=index, timestamp=ts, actor_role=role,
                           actor_id=actor_id, event_kind=kind, payload=payload,
                           prev_hash=prev, hash=digest)
        data = (entry.to_line() + "\n").encode("utf-8")

        self.path.parent.mkdir(parents=True, exist_ok=True)
        old_size = self.path.stat().st_size if self.path.exists() else 0
        try:
            with open(self.path, "ab") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as e:
            try:
                if self.path.exists():
                    with open(self.path, "ab") as fh:
                        fh.truncate(old_size)
            except OSError:
                pass
            raise StorageFailure(f"append failed: {e}") from None

        self._next_index = index + 1
        self._last_hash = digest
        return entry

    def entries(self) -> list[AuditEntry]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text("utf-8").splitlines():
            if line:
                out.append(_parse_line(line))
        return out


def verify(path: str | Path) -> VerifyResult:
    """Recompute the whole chain; report the first failing index.

    Checks per entry: parseable line, dense increasing indices, prev_hash
    linkage (genesis = 64 zeros), and the recomputed SHA-256.
    """
    path = Path(path)
    if not path.exists():
        return VerifyResult(ok=True)
    prev = GENESIS_HASH
    position = 0
    for raw in path.read_bytes().split(b"\n"):
        if not raw:
            continue
        try:
            entry = _parse_line(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError,
                TypeError):
            return VerifyResult(False, position, "MalformedLine")
        if entry.index != position:
            return VerifyResult(False, position, "IndexMismatch")
        if entry.prev_hash != prev:
            reason = "BadGenesis" if position == 0 else "PrevHashMismatch"
            return VerifyResult(False, position, reason)
        expected = entry_hash(entry.index, entry.timestamp, entry.actor_role,
                              entry.actor_id, entry.event_kind, entry.payload,
                              entry.prev_hash)
        if entry.hash != expected:
            return VerifyResult(False, position, "HashMismatch")
        prev = entry.hash
        position += 1
    return VerifyResult(ok=True)


def export_range(log: AuditLog, from_index: int, to_index: int) -> dict:
    """Contiguous slice plus the chain anchor needed to verify it standalone."""
    entries = log.entries()
    if not (0 <= from_index <= to_index < len(entries)):
        raise RangeOutOfBounds(from_index, to_index, len(entries))
    anchor = GENESIS_HASH if from_index == 0 else entries[from_index - 1].hash
    return {
        "anchor_prev_hash": anchor,
        "from_index": from_index,
        "to_index": to_index,
        "entries": [json.loads(e.to_line()) for e in entries[from_index:to_index + 1]],
    }


def verify_bundle(bundle: dict) -> VerifyResult:
    """Verify an exported slice against its anchor hash."""
    prev = bundle["anchor_prev_hash"]
    position = int(bundle["from_index"])
    for record in bundle["entries"]:
        try:
            entry = _parse_line(json.dumps(record))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError):
            return VerifyResult(False, position, "MalformedLine")
        if entry.index != position:
            return VerifyResult(False, position, "IndexMismatch")
        if entry.prev_hash != prev:
            return VerifyResult(False, position, "PrevHashMismatch")
        expected = entry_hash(entry.index, entry.timestamp, entry.actor_role,
                              entry.actor_id, entry.event_kind, entry.payload,
                              entry.prev_hash)
        if entry.hash != expected:
            return VerifyResult(False, position, "HashMismatch")
        prev = entry.hash
        position += 1
    return VerifyResult(ok=True)
