"""Protocol participant: registration, access requests, grants and retrieval.

The contract accepts any grant and any number of requests.  The rules that
make the exchange coherent (one live request per asset and accessor, grants
only answer requests, payloads must hash to their id) are enforced here.
"""

from __future__ import annotations

import io
import json
import logging
import os
import tempfile
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .accounts import Account
from .contract import TOPICS, decode_request_payload
from .errors import (
    ContractError,
    DuplicateRequest,
    GasLimitExceeded,
    HashMismatch,
    IntegrityMismatch,
    MissingAEK,
    NoPendingRequest,
    NotFound,
    NotGranted,
    NotMaintainer,
    RegistrationAborted,
    UnsealFailed,
    error_for_reason,
)
from .exchange import (
    DEFAULT_SEALING,
    SealingKeyPair,
    compute_asset_id,
    decrypt_payload,
    encrypt_payload,
    generate_keypair,
    new_aek,
    seal_aek,
    unseal_aek,
)
from .ledger import Ledger, Receipt
from .primitives import AccountAddress, AssetId, canonical_json
from .provenance import ProvenanceGraph, accessors, build_ancestry, descendants
from .storage import ObjectStore, StorageUrl

log = logging.getLogger(__name__)

KEYSTORE_FORMAT = "aiprov-keystore/1"
# every URL the client writes has this length: "store://" + 64 hex digits
STORE_URL_LENGTH = 72


class Keystore:
    """Per-actor secrets: the account key, AEKs of known assets and request keypairs.

    With a path, every mutation rewrites the file atomically with mode 0600.
    """

    def __init__(self, account: Account, path: str | os.PathLike | None = None,
                 aeks: Mapping[str, str] | None = None,
                 requests: Mapping[str, list[dict[str, Any]]] | None = None):
        self.account = account
        self.path = Path(path) if path is not None else None
        self._aeks: dict[str, str] = dict(aeks or {})
        self._requests: dict[str, list[dict[str, Any]]] = {k: list(v) for k, v in (requests or {}).items()}

    @classmethod
    def create(cls, path: str | os.PathLike, account: Account) -> "Keystore":
        store = cls(account, path)
        store.save()
        return store

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Keystore":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != KEYSTORE_FORMAT:
            raise ValueError(f"{path}: not a keystore")
        return cls(Account.from_dict(doc["account"]), path, doc["aeks"], doc["requests"])

    def to_dict(self) -> dict[str, Any]:
        return {"format": KEYSTORE_FORMAT, "account": self.account.to_dict(),
                "aeks": self._aeks, "requests": self._requests}

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        try:
            os.fchmod(fd, 0o600)
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            os.replace(tmp, self.path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    # AEKs

    def aek(self, asset_id: bytes) -> bytes | None:
        value = self._aeks.get(AssetId(asset_id).hex())
        return bytes.fromhex(value) if value else None

    def set_aek(self, asset_id: bytes, aek: bytes) -> None:
        self._aeks[AssetId(asset_id).hex()] = aek.hex()
        self.save()

    def drop_aek(self, asset_id: bytes) -> None:
        if self._aeks.pop(AssetId(asset_id).hex(), None) is not None:
            self.save()

    # request keypairs

    def add_keypair(self, asset_id: bytes, keypair: SealingKeyPair) -> dict[str, Any]:
        entry = {"algorithm": keypair.algorithm, "public_key": keypair.public_key.hex(),
                 "private_key": keypair.private_key.hex(), "block": None}
        self._requests.setdefault(AssetId(asset_id).hex(), []).append(entry)
        self.save()
        return entry

    def drop_keypair(self, asset_id: bytes, entry: dict[str, Any]) -> None:
        entries = self._requests.get(AssetId(asset_id).hex(), [])
        if entry in entries:
            entries.remove(entry)
            if not entries:
                del self._requests[AssetId(asset_id).hex()]
            self.save()

    def keypairs(self, asset_id: bytes) -> list[SealingKeyPair]:
        """Keypairs requested for an asset, newest first."""
        return [SealingKeyPair(e["algorithm"], bytes.fromhex(e["public_key"]),
                               bytes.fromhex(e["private_key"]))
                for e in reversed(self._requests.get(AssetId(asset_id).hex(), []))]


@dataclass(frozen=True)
class PendingRequest:
    asset_id: AssetId
    accessor: AccountAddress
    encryption_algorithm: str
    public_key: bytes
    block: int


@dataclass
class AuditReport:
    asset_id: AssetId
    accessors: list[tuple[AccountAddress, int]]
    ancestry: ProvenanceGraph
    descendants: set[AssetId]


def pending_requests(ledger: Ledger, asset_id: bytes | None = None) -> list[PendingRequest]:
    """Requests with no later grant for the same (asset, accessor), from logs alone."""
    wanted = None if asset_id is None else AssetId(asset_id)
    entries = (ledger.get_logs(topic0=TOPICS["RequestAccess"], topic1=wanted)
               + ledger.get_logs(topic0=TOPICS["GrantAccess"], topic1=wanted))
    live: dict[tuple[AssetId, AccountAddress], PendingRequest] = {}
    for entry in sorted(entries, key=lambda e: e.position):
        key = (AssetId(entry.topics[1]), AccountAddress.from_topic(entry.topics[2]))
        if entry.topics[0] == TOPICS["GrantAccess"]:
            live.pop(key, None)
            continue
        try:
            algorithm, public_key = decode_request_payload(entry.data)
        except (ValueError, UnicodeDecodeError):
            log.warning("skipping malformed request payload in block %d", entry.block_number)
            continue
        live.pop(key, None)
        live[key] = PendingRequest(key[0], key[1], algorithm, public_key, entry.block_number)
    return list(live.values())


class Client:
    """One actor's view of the protocol, bound to a ledger, a store and a keystore."""

    def __init__(self, ledger: Ledger, store: ObjectStore, keystore: Keystore):
        self.ledger = ledger
        self.store = store
        self.keystore = keystore
        self.address = keystore.account.address
        if not ledger.has_account(self.address):
            ledger.create_account(self.address)
        self.last_receipt: Receipt | None = None

    @property
    def name(self) -> str:
        return self.keystore.account.name

    def _submit(self, function: str, **args: Any) -> Receipt:
        receipt = self.ledger.transact(self.address, function, **args)
        self.last_receipt = receipt
        if not receipt.ok:
            raise error_for_reason(receipt.reason, f"{function} reverted: {receipt.reason}")
        return receipt

    # registration

    def register_asset(self, payload: bytes, metadata: Mapping[str, Any] | str,
                       parents: Iterable[bytes] = ()) -> AssetId:
        """Hash, encrypt, upload and register a payload; the caller becomes maintainer."""
        asset_id = compute_asset_id(payload)
        text = metadata if isinstance(metadata, str) else canonical_json(dict(metadata)).decode()
        parents = [AssetId(p) for p in parents]
        # dry run first so contract and gas failures leave the keystore and store untouched
        placeholder = "store://" + "0" * 64
        self.ledger.call("addAsset", self.address, asset_id=asset_id, metadata=text,
                         url=placeholder, parents=parents)
        schedule = self.ledger.schedule
        gas = schedule.estimate("addAsset", len(parents), len(text.encode()), STORE_URL_LENGTH)
        if gas > schedule.block_gas_limit:
            raise GasLimitExceeded(f"addAsset needs {gas} gas, block limit "
                                   f"{schedule.block_gas_limit}")

        staged = self.keystore.aek(asset_id) is None
        aek = new_aek() if staged else self.keystore.aek(asset_id)
        if staged:
            self.keystore.set_aek(asset_id, aek)
        try:
            url = self.store.put(encrypt_payload(aek, payload).to_bytes())
            self._submit("addAsset", asset_id=asset_id, metadata=text, url=str(url),
                         parents=parents)
        except BaseException as exc:
            if staged:
                self.keystore.drop_aek(asset_id)
            if isinstance(exc, ContractError):
                raise RegistrationAborted(f"addAsset reverted: {exc.name}") from exc
            raise
        return asset_id

    # access

    def request_asset(self, asset_id: bytes, algorithm: str = DEFAULT_SEALING) -> PendingRequest:
        asset_id = AssetId(asset_id)
        self.ledger.get_maintainer(asset_id)
        if any(r.accessor == self.address for r in pending_requests(self.ledger, asset_id)):
            raise DuplicateRequest(f"request for {asset_id.hex()} still pending")
        keypair = generate_keypair(algorithm)
        entry = self.keystore.add_keypair(asset_id, keypair)
        try:
            receipt = self._submit("requestAccess", asset_id=asset_id,
                                   encryption_algorithm=algorithm, public_key=keypair.public_key)
        except BaseException:
            self.keystore.drop_keypair(asset_id, entry)
            raise
        block = receipt.logs[0].block_number
        entry["block"] = block
        self.keystore.save()
        return PendingRequest(asset_id, self.address, algorithm, keypair.public_key, block)

    def list_pending_requests(self) -> list[PendingRequest]:
        """Open requests for assets this actor currently maintains."""
        mine: dict[AssetId, bool] = {}
        out = []
        for req in pending_requests(self.ledger):
            if req.asset_id not in mine:
                mine[req.asset_id] = self.ledger.get_maintainer(req.asset_id) == self.address
            if mine[req.asset_id]:
                out.append(req)
        return out

    def my_pending_requests(self) -> list[PendingRequest]:
        return [r for r in pending_requests(self.ledger) if r.accessor == self.address]

    def grant(self, asset_id: bytes, accessor: bytes) -> Receipt:
        asset_id, accessor = AssetId(asset_id), AccountAddress(accessor)
        if self.ledger.get_maintainer(asset_id) != self.address:
            raise NotMaintainer(f"{self.address} does not maintain {asset_id.hex()}")
        matching = [r for r in pending_requests(self.ledger, asset_id) if r.accessor == accessor]
        if not matching:
            raise NoPendingRequest(f"{accessor} has no open request for {asset_id.hex()}")
        aek = self.keystore.aek(asset_id)
        if aek is None:
            raise MissingAEK(asset_id.hex())
        request = matching[-1]
        sealed = seal_aek(request.public_key, aek, request.encryption_algorithm)
        return self._submit("grantAccess", asset_id=asset_id, accessor=accessor,
                            encrypted_aek=sealed.to_bytes())

    def _granted_aek(self, asset_id: AssetId) -> bytes:
        cached = self.keystore.aek(asset_id)
        if cached is not None:
            return cached
        grants = self.ledger.get_logs(topic0=TOPICS["GrantAccess"], topic1=asset_id,
                                      topic2=self.address.to_topic())
        if not grants:
            raise NotGranted(f"no grant of {asset_id.hex()} to {self.address}")
        keypairs = self.keystore.keypairs(asset_id)
        for grant in reversed(grants):
            for keypair in keypairs:
                try:
                    return unseal_aek(keypair, grant.data)
                except UnsealFailed:
                    continue
        raise UnsealFailed(f"no stored keypair opens the grant for {asset_id.hex()}")

    def fetch_asset(self, asset_id: bytes) -> bytes:
        """Unseal the AEK, download the newest reachable ciphertext and check the hash."""
        asset_id = AssetId(asset_id)
        aek = self._granted_aek(asset_id)
        urls = self.ledger.get_logs(topic0=TOPICS["URL"], topic1=asset_id)
        if not urls:
            raise NotFound(f"no URL registered for {asset_id.hex()}")
        failure: Exception | None = None
        for entry in reversed(urls):
            try:
                ciphertext = self.store.get(entry.data.decode())
                break
            except (NotFound, IntegrityMismatch) as exc:
                failure = exc
            except (ValueError, UnicodeDecodeError) as exc:
                failure = NotFound(f"unusable URL: {exc}")
        else:
            raise failure
        plaintext = decrypt_payload(aek, ciphertext)
        if compute_asset_id(plaintext) != asset_id:
            raise HashMismatch(f"payload does not hash to {asset_id.hex()}")
        if self.keystore.aek(asset_id) is None:
            self.keystore.set_aek(asset_id, aek)
        return plaintext

    # maintenance and queries

    def transfer(self, asset_id: bytes, new_maintainer: bytes) -> Receipt:
        return self._submit("transfer", asset_id=AssetId(asset_id),
                            new_maintainer=AccountAddress(new_maintainer))

    def add_url(self, asset_id: bytes, url: StorageUrl | str) -> Receipt:
        url = StorageUrl.parse(url) if isinstance(url, str) else url
        return self._submit("addUrl", asset_id=AssetId(asset_id), url=str(url))

    def audit(self, asset_id: bytes) -> AuditReport:
        asset_id = AssetId(asset_id)
        return AuditReport(asset_id, accessors(self.ledger, asset_id),
                           build_ancestry(self.ledger, asset_id), descendants(self.ledger, asset_id))


ActorContext = Client

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def pack_directory(root: str | os.PathLike) -> bytes:
    """Deterministic zip of a directory: sorted entries, fixed timestamps and modes."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(str(root))
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for path in sorted(p for p in root.rglob("*") if p.is_file()):
            info = zipfile.ZipInfo(path.relative_to(root).as_posix(), _ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, path.read_bytes())
    return buf.getvalue()
