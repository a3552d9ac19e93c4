import json
import random

import pytest

from congait.audit import (
    AuditEventKind,
    AuditLog,
    GENESIS_HASH,
    RangeOutOfBounds,
    entry_hash,
    export_range,
    verify,
    verify_bundle,
)
from congait.contest import Role


@pytest.fixture
def log_path(tmp_path):
    return tmp_path / "audit.log"


def fill(log: AuditLog, n: int) -> None:
    for i in range(n):
        log.append(AuditEventKind.PREDICTION_ISSUED, Role.CLINICIAN, "c1",
                   {"prediction_id": f"p{i}", "stage": 2.5, "n": i})


class TestAppend:
    def test_genesis_prev_hash_is_64_zeros(self, log_path):
        log = AuditLog(log_path)
        entry = log.append(AuditEventKind.CONTEST_OPENED, Role.CLINICIAN, "c1",
                           {"case_id": "x"})
        assert entry.index == 0
        assert entry.prev_hash == GENESIS_HASH == "0" * 64
        assert len(entry.hash) == 64 and entry.hash == entry.hash.lower()

    def test_same_payload_twice_chains_differently(self, log_path):
        log = AuditLog(log_path)
        a = log.append(AuditEventKind.CAS_COMPUTED, Role.ADMIN, "a1", {"v": 1},
                       timestamp="2026-01-01T00:00:00+00:00")
        b = log.append(AuditEventKind.CAS_COMPUTED, Role.ADMIN, "a1", {"v": 1},
                       timestamp="2026-01-01T00:00:00+00:00")
        assert a.hash != b.hash
        assert b.prev_hash == a.hash

    def test_last_line_round_trips_bit_exactly(self, log_path):
        log = AuditLog(log_path)
        fill(log, 3)
        entry = log.append(AuditEventKind.CONFIG_CHANGED, Role.ADMIN, "a1",
                           {"key": "max_rounds", "value": 3})
        last_line = log_path.read_text("utf-8").splitlines()[-1]
        assert last_line == entry.to_line()

    def test_reopen_resumes_chain(self, log_path):
        log = AuditLog(log_path)
        fill(log, 5)
        reopened = AuditLog(log_path)
        assert len(reopened) == 5
        entry = reopened.append(AuditEventKind.CAS_COMPUTED, Role.ADMIN, "a1", {})
        assert entry.index == 5
        assert verify(log_path).ok

    def test_hash_recomputation_matches(self, log_path):
        log = AuditLog(log_path)
        entry = log.append(AuditEventKind.SESSION_INGESTED, Role.ADMIN, "a1",
                           {"session_id": "s1"})
        assert entry.hash == entry_hash(entry.index, entry.timestamp,
                                        entry.actor_role, entry.actor_id,
                                        entry.event_kind, entry.payload,
                                        entry.prev_hash)


class TestVerify:
    def test_empty_log_ok(self, log_path):
        assert verify(log_path).ok

    def test_ten_entries_ok(self, log_path):
        log = AuditLog(log_path)
        fill(log, 10)
        assert verify(log_path).ok

    def test_payload_byte_flip_detected_at_entry_4(self, log_path):
        log = AuditLog(log_path)
        fill(log, 10)
        lines = log_path.read_text("utf-8").splitlines()
        record = json.loads(lines[4])
        record["payload"]["n"] = 999  # tamper with persisted payload
        lines[4] = json.dumps(record, separators=(",", ":"))
        log_path.write_text("\n".join(lines) + "\n", "utf-8")
        result = verify(log_path)
        assert not result.ok
        assert result.first_bad_index == 4
        assert result.reason == "HashMismatch"

    def test_truncation_breaks_density(self, log_path):
        log = AuditLog(log_path)
        fill(log, 6)
        lines = log_path.read_text("utf-8").splitlines()
        del lines[2]
        log_path.write_text("\n".join(lines) + "\n", "utf-8")
        result = verify(log_path)
        assert not result.ok
        assert result.first_bad_index == 2

    def test_random_single_byte_tampers_always_detected(self, log_path):
        log = AuditLog(log_path)
        fill(log, 50)
        original = log_path.read_bytes()
        line_starts = []
        offset = 0
        for line in original.split(b"\n")[:-1]:
            line_starts.append((offset, len(line)))
            offset += len(line) + 1
        rnd = random.Random(4242)
        for _ in range(100):
            entry_idx = rnd.randrange(50)
            start, length = line_starts[entry_idx]
            pos = start + rnd.randrange(length)
            mutated = bytearray(original)
            old = mutated[pos]
            new = rnd.randrange(256)
            while new == old:
                new = rnd.randrange(256)
            mutated[pos] = new
            log_path.write_bytes(bytes(mutated))
            result = verify(log_path)
            assert not result.ok, f"tamper at entry {entry_idx} went undetected"
            assert result.first_bad_index <= entry_idx
        log_path.write_bytes(original)
        assert verify(log_path).ok


class TestExport:
    def test_full_range_verifies_standalone(self, log_path):
        log = AuditLog(log_path)
        fill(log, 8)
        bundle = export_range(log, 0, 7)
        assert bundle["anchor_prev_hash"] == GENESIS_HASH
        assert verify_bundle(bundle).ok

    def test_slice_verifies_with_anchor(self, log_path):
        log = AuditLog(log_path)
        fill(log, 8)
        bundle = export_range(log, 3, 7)
        assert bundle["anchor_prev_hash"] == log.entries()[2].hash
        assert verify_bundle(bundle).ok

    def test_tampered_bundle_fails(self, log_path):
        log = AuditLog(log_path)
        fill(log, 8)
        bundle = export_range(log, 3, 7)
        bundle["entries"][1]["payload"]["n"] = -1
        assert not verify_bundle(bundle).ok

    def test_inverted_range_rejected(self, log_path):
        log = AuditLog(log_path)
        fill(log, 8)
        with pytest.raises(RangeOutOfBounds):
            export_range(log, 7, 3)
        with pytest.raises(RangeOutOfBounds):
            export_range(log, 0, 8)


class TestStorageFailure:
    def test_unwritable_target_raises_without_partial_entry(self, tmp_path):
        from congait.audit import StorageFailure
        blocked = tmp_path / "audit.log"
        blocked.mkdir()  # a directory cannot be appended to
        log = AuditLog.__new__(AuditLog)
        log.path = blocked
        log._next_index = 0
        log._last_hash = GENESIS_HASH
        with pytest.raises(StorageFailure):
            log.append(AuditEventKind.CAS_COMPUTED, Role.ADMIN, "a1", {})
        assert len(log) == 0  # chain state untouched


class TestAppendOnly:
    def test_file_length_monotone_across_operations(self, log_path):
        log = AuditLog(log_path)
        sizes = []
        for i in range(10):
            log.append(AuditEventKind.CONTEST_TRANSITION, Role.CLINICIAN, "c1",
                       {"case_id": "c", "round": i})
            sizes.append(log_path.stat().st_size)
            verify(log_path)
            export_range(log, 0, i)
            assert log_path.stat().st_size == sizes[-1]
        assert sizes == sorted(sizes)
