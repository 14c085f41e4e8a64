"""Canonical JSON hashing for configs embedded in manifests and containers."""

from __future__ import annotations

import dataclasses
import hashlib
import json


def canonical_json(obj) -> str:
    """Stable JSON text: sorted keys, no whitespace, dataclasses flattened."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> bytes:
    """32-byte sha256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).digest()


def config_hash_hex(obj) -> str:
    return config_digest(obj).hex()
