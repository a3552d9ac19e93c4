"""Canonical JSON encoding shared by model files, audit hashing, and CAS reports.

Canonical form: keys sorted, no insignificant whitespace, UTF-8, floats as the
shortest decimal that round-trips (Python's float repr), NaN/Inf rejected.
The same input value always yields the same bytes on every platform.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_hash(obj: Any) -> str:
    """Lowercase hex SHA-256 of the canonical encoding."""
    return sha256_hex(canonical_bytes(obj))
