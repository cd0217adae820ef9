"""Fixed-width byte identifiers used across the ledger and the contract."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def canonical_json(obj: Any) -> bytes:
    """Deterministic compact JSON encoding used for hashing and persistence."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


class _FixedBytes(bytes):
    size = 0

    def __new__(cls, value: bytes | bytearray | str):
        if isinstance(value, str):
            value = bytes.fromhex(value.removeprefix("0x"))
        if len(value) != cls.size:
            raise ValueError(f"{cls.__name__} must be {cls.size} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def from_hex(cls, text: str):
        try:
            return cls(text)
        except ValueError as exc:
            raise ValueError(f"invalid {cls.__name__}: {text!r}") from exc

    def __str__(self) -> str:
        return "0x" + self.hex()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.hex()!r})"

    def short(self) -> str:
        return "0x" + self.hex()[:8]


class AccountAddress(_FixedBytes):
    """20-byte account identifier, derived from a signing public key."""

    size = 20

    @classmethod
    def from_public_key(cls, public_key: bytes) -> "AccountAddress":
        return cls(sha256(public_key)[-20:])

    def to_topic(self) -> bytes:
        return bytes(12) + self

    @classmethod
    def from_topic(cls, topic: bytes) -> "AccountAddress":
        if len(topic) != 32 or any(topic[:12]):
            raise ValueError("topic does not hold an address")
        return cls(topic[12:])


class AssetId(_FixedBytes):
    """32-byte content hash identifying an AI asset."""

    size = 32
