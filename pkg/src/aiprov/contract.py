"""The provenance contract: a deterministic state machine driven by the ledger.

State is deliberately minimal (asset id -> maintainer); everything else lives
in the event logs the calls emit.  Every piece of state can be rebuilt from
the ``Register`` and ``FormerMaintainer`` logs together with the transactions
that produced them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from .errors import (
    AssetExists,
    MalformedArguments,
    MalformedMetadata,
    NotMaintainer,
    UnknownAccount,
    UnknownAsset,
    UnknownFunction,
    UnknownParent,
)
from .primitives import AccountAddress, AssetId, canonical_json, sha256

EVENT_SIGNATURES = {
    "Register": "Register(bytes32,string)",
    "URL": "URL(bytes32,string)",
    "FormerMaintainer": "FormerMaintainer(bytes32,address)",
    "ParentOf": "ParentOf(bytes32,bytes32)",
    "ChildOf": "ChildOf(bytes32,bytes32)",
    "RequestAccess": "RequestAccess(bytes32,address,string,bytes)",
    "GrantAccess": "GrantAccess(bytes32,address,bytes)",
}


def event_topic(name: str) -> bytes:
    """topic0 of an event: the hash of its canonical signature string."""
    return sha256(EVENT_SIGNATURES[name].encode())


TOPICS = {name: event_topic(name) for name in EVENT_SIGNATURES}
EVENT_BY_TOPIC = {topic: name for name, topic in TOPICS.items()}

# argument schemas, in call order
FUNCTIONS: dict[str, tuple[tuple[str, str], ...]] = {
    "addAsset": (("asset_id", "bytes32"), ("metadata", "string"), ("url", "string"),
                 ("parents", "bytes32[]")),
    "transfer": (("asset_id", "bytes32"), ("new_maintainer", "address")),
    "addUrl": (("asset_id", "bytes32"), ("url", "string")),
    "requestAccess": (("asset_id", "bytes32"), ("encryption_algorithm", "string"),
                      ("public_key", "bytes")),
    "grantAccess": (("asset_id", "bytes32"), ("accessor", "address"), ("encrypted_aek", "bytes")),
    "getMaintainer": (("asset_id", "bytes32"),),
}
VIEW_FUNCTIONS = frozenset({"getMaintainer"})

# (event, topic count, which size the data field carries) per state-changing call;
# parent links are priced separately through per_parent_overhead
FUNCTION_EVENTS: dict[str, tuple[tuple[str, int, str | None], ...]] = {
    "addAsset": (("Register", 2, "metadata"), ("URL", 2, "data")),
    "transfer": (("FormerMaintainer", 3, None),),
    "addUrl": (("URL", 2, "data"),),
    "requestAccess": (("RequestAccess", 3, "data"),),
    "grantAccess": (("GrantAccess", 3, "data"),),
}

_ENCODERS: dict[str, Callable[[Any], Any]] = {
    "bytes32": lambda v: AssetId(v).hex(),
    "address": lambda v: AccountAddress(v).hex(),
    "string": lambda v: _check_str(v),
    "bytes": lambda v: bytes(v).hex(),
    "bytes32[]": lambda v: [AssetId(x).hex() for x in v],
}
_DECODERS: dict[str, Callable[[Any], Any]] = {
    "bytes32": AssetId.from_hex,
    "address": AccountAddress.from_hex,
    "string": lambda v: _check_str(v),
    "bytes": bytes.fromhex,
    "bytes32[]": lambda v: [AssetId.from_hex(x) for x in v],
}


def _check_str(value: Any) -> str:
    if not isinstance(value, str):
        raise TypeError(f"expected str, got {type(value).__name__}")
    return value


def encode_call(function: str, **args: Any) -> bytes:
    """Encode call arguments into the transaction ``args`` bytes."""
    schema = _schema(function)
    if set(args) != {name for name, _ in schema}:
        raise MalformedArguments(f"{function} expects {[n for n, _ in schema]}, got {sorted(args)}")
    try:
        return canonical_json({name: _ENCODERS[kind](args[name]) for name, kind in schema})
    except (TypeError, ValueError) as exc:
        raise MalformedArguments(f"{function}: {exc}") from exc


def decode_call(function: str, data: bytes) -> dict[str, Any]:
    schema = _schema(function)
    try:
        raw = json.loads(data)
        return {name: _DECODERS[kind](raw[name]) for name, kind in schema}
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedArguments(f"{function}: {exc}") from exc


def _schema(function: str):
    try:
        return FUNCTIONS[function]
    except KeyError:
        raise UnknownFunction(function) from None


def encode_request_payload(algorithm: str, public_key: bytes) -> bytes:
    """Data field of a RequestAccess event: two length-prefixed fields."""
    alg = algorithm.encode()
    return struct.pack(">H", len(alg)) + alg + struct.pack(">H", len(public_key)) + public_key


def decode_request_payload(data: bytes) -> tuple[str, bytes]:
    (n,) = struct.unpack_from(">H", data, 0)
    algorithm = data[2:2 + n].decode()
    (m,) = struct.unpack_from(">H", data, 2 + n)
    public_key = data[4 + n:4 + n + m]
    if len(public_key) != m or len(data) != 4 + n + m:
        raise ValueError("truncated request payload")
    return algorithm, public_key


@dataclass(frozen=True)
class Event:
    """An event emitted by a call, before the ledger positions it."""

    name: str
    topics: tuple[bytes, ...]
    data: bytes = b""


def _event(name: str, *indexed: bytes, data: bytes = b"") -> Event:
    return Event(name, (TOPICS[name], *indexed), data)


CONTRACT_ADDRESS = AccountAddress(sha256(b"aiprov/provenance-contract")[-20:])


class ProvenanceContract:
    """Asset registry with maintainer-gated updates and access-exchange events."""

    address = CONTRACT_ADDRESS

    def __init__(self, maintainers: dict[AssetId, AccountAddress] | None = None):
        self.maintainers: dict[AssetId, AccountAddress] = dict(maintainers or {})

    def copy(self) -> "ProvenanceContract":
        return ProvenanceContract(self.maintainers)

    def snapshot(self) -> dict[AssetId, AccountAddress]:
        return dict(self.maintainers)

    def execute(self, sender: AccountAddress, function: str, args: dict[str, Any],
                accounts: Iterable[AccountAddress] = ()) -> list[Event]:
        """Apply one call, mutating state, and return the emitted events.

        Raises a ContractError subclass on any violated precondition; callers
        run this on a scratch copy so a failure leaves no trace.
        """
        if function in VIEW_FUNCTIONS or function not in FUNCTIONS:
            raise UnknownFunction(function)
        return getattr(self, "_" + function)(sender, accounts=accounts, **args)

    def get_maintainer(self, asset_id: AssetId) -> AccountAddress:
        try:
            return self.maintainers[asset_id]
        except KeyError:
            raise UnknownAsset(AssetId(asset_id).hex()) from None

    def measure(self, function: str, args: dict[str, Any]) -> tuple[int, int, int]:
        """(n_parents, metadata_bytes, data_bytes) of a call, for gas metering."""
        if function == "addAsset":
            return len(args["parents"]), len(args["metadata"].encode()), len(args["url"].encode())
        if function == "addUrl":
            return 0, 0, len(args["url"].encode())
        if function == "requestAccess":
            payload = encode_request_payload(args["encryption_algorithm"], args["public_key"])
            return 0, 0, len(payload)
        if function == "grantAccess":
            return 0, 0, len(args["encrypted_aek"])
        if function in FUNCTIONS:
            return 0, 0, 0
        raise UnknownFunction(function)

    # calls ------------------------------------------------------------------

    def _require_maintainer(self, sender, asset_id):
        if self.get_maintainer(asset_id) != sender:
            raise NotMaintainer(f"{sender} does not maintain {asset_id.hex()}")

    def _addAsset(self, sender, asset_id, metadata, url, parents, accounts=()):
        if asset_id in self.maintainers:
            raise AssetExists(asset_id.hex())
        for parent in parents:
            if parent not in self.maintainers:
                raise UnknownParent(parent.hex())
        if len(set(parents)) != len(parents):
            raise MalformedArguments("duplicate parent")
        try:
            parsed = json.loads(metadata)
        except ValueError as exc:
            raise MalformedMetadata(str(exc)) from None
        if not isinstance(parsed, dict):
            raise MalformedMetadata("metadata must be a JSON object")
        self.maintainers[asset_id] = sender
        events = [
            _event("Register", asset_id, data=metadata.encode()),
            _event("URL", asset_id, data=url.encode()),
        ]
        for parent in parents:
            events.append(_event("ParentOf", asset_id, parent))
            events.append(_event("ChildOf", parent, asset_id))
        return events

    def _transfer(self, sender, asset_id, new_maintainer, accounts=()):
        self._require_maintainer(sender, asset_id)
        if new_maintainer not in accounts:
            raise UnknownAccount(str(new_maintainer))
        previous = self.maintainers[asset_id]
        self.maintainers[asset_id] = new_maintainer
        return [_event("FormerMaintainer", asset_id, previous.to_topic())]

    def _addUrl(self, sender, asset_id, url, accounts=()):
        self._require_maintainer(sender, asset_id)
        return [_event("URL", asset_id, data=url.encode())]

    def _requestAccess(self, sender, asset_id, encryption_algorithm, public_key, accounts=()):
        self.get_maintainer(asset_id)
        payload = encode_request_payload(encryption_algorithm, public_key)
        return [_event("RequestAccess", asset_id, sender.to_topic(), data=payload)]

    def _grantAccess(self, sender, asset_id, accessor, encrypted_aek, accounts=()):
        self._require_maintainer(sender, asset_id)
        return [_event("GrantAccess", asset_id, accessor.to_topic(), data=encrypted_aek)]
