"""Actor accounts: an Ed25519 signing key and the address derived from it."""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from .primitives import AccountAddress, sha256

_RAW = serialization.Encoding.Raw


@dataclass(frozen=True)
class Account:
    name: str
    private_key: bytes

    @classmethod
    def generate(cls, name: str) -> "Account":
        key = Ed25519PrivateKey.generate()
        return cls(name, key.private_bytes(_RAW, serialization.PrivateFormat.Raw,
                                           serialization.NoEncryption()))

    @classmethod
    def from_seed(cls, name: str, seed: str | bytes) -> "Account":
        """Deterministic account, used by scenario scripts for stable addresses."""
        if isinstance(seed, str):
            seed = seed.encode()
        return cls(name, sha256(b"aiprov/account/" + seed))

    @property
    def public_key(self) -> bytes:
        key = Ed25519PrivateKey.from_private_bytes(self.private_key)
        return key.public_key().public_bytes(_RAW, serialization.PublicFormat.Raw)

    @property
    def address(self) -> AccountAddress:
        return AccountAddress.from_public_key(self.public_key)

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "private_key": self.private_key.hex(),
                "address": self.address.hex()}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "Account":
        return cls(d["name"], bytes.fromhex(d["private_key"]))
