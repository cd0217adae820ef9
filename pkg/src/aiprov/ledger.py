"""Single-chain simulated ledger with receipts, topic-indexed logs and gas metering.

Every transaction is sealed into its own block with a deterministic
timestamp (``genesis_time + number``), so replays are byte-stable.  Blocks
are hash-linked; :meth:`Ledger.verify_chain` recomputes the links.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .contract import VIEW_FUNCTIONS, Event, ProvenanceContract, decode_call, encode_call
from .errors import (
    BadNonce,
    ChainCorrupted,
    ContractError,
    GasLimitExceeded,
    UnknownAccount,
    UnknownFunction,
)
from .gas import GasSchedule
from .primitives import AccountAddress, canonical_json, sha256

log = logging.getLogger(__name__)

GENESIS_TIME = 1_577_836_800  # 2020-01-01T00:00:00Z
ZERO_HASH = bytes(32)
FORMAT = "aiprov-chain/1"


@dataclass(frozen=True)
class Transaction:
    sender: AccountAddress
    function: str
    args: bytes
    gas_limit: int
    nonce: int

    def to_dict(self) -> dict[str, Any]:
        return {"sender": self.sender.hex(), "function": self.function, "args": self.args.hex(),
                "gas_limit": self.gas_limit, "nonce": self.nonce}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transaction":
        return cls(AccountAddress.from_hex(d["sender"]), d["function"], bytes.fromhex(d["args"]),
                   int(d["gas_limit"]), int(d["nonce"]))

    def decoded_args(self) -> dict[str, Any]:
        return decode_call(self.function, self.args)


@dataclass(frozen=True)
class LogEntry:
    contract: AccountAddress
    topics: tuple[bytes, ...]
    data: bytes
    block_number: int
    tx_index: int
    log_index: int

    def __post_init__(self):
        if not 1 <= len(self.topics) <= 4 or any(len(t) != 32 for t in self.topics):
            raise ValueError("a log carries 1 to 4 topics of 32 bytes")

    @property
    def position(self) -> tuple[int, int, int]:
        return self.block_number, self.tx_index, self.log_index

    def to_dict(self) -> dict[str, Any]:
        return {"contract": self.contract.hex(), "topics": [t.hex() for t in self.topics],
                "data": self.data.hex(), "block_number": self.block_number,
                "tx_index": self.tx_index, "log_index": self.log_index}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LogEntry":
        return cls(AccountAddress.from_hex(d["contract"]),
                   tuple(bytes.fromhex(t) for t in d["topics"]), bytes.fromhex(d["data"]),
                   int(d["block_number"]), int(d["tx_index"]), int(d["log_index"]))


@dataclass(frozen=True)
class Receipt:
    status: str  # "success" | "reverted"
    gas_used: int
    logs: tuple[LogEntry, ...] = ()
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status, "reason": self.reason, "gas_used": self.gas_used,
                "logs": [entry.to_dict() for entry in self.logs]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Receipt":
        if d["status"] not in ("success", "reverted"):
            raise ValueError(f"bad receipt status {d['status']!r}")
        return cls(d["status"], int(d["gas_used"]), tuple(LogEntry.from_dict(x) for x in d["logs"]),
                   d["reason"])


@dataclass(frozen=True)
class Block:
    number: int
    parent_hash: bytes
    timestamp: int
    transactions: tuple[Transaction, ...]
    receipts: tuple[Receipt, ...]
    block_hash: bytes = b""

    def header_dict(self) -> dict[str, Any]:
        return {"number": self.number, "parent_hash": self.parent_hash.hex(),
                "timestamp": self.timestamp,
                "transactions": [tx.to_dict() for tx in self.transactions],
                "receipts": [r.to_dict() for r in self.receipts]}

    def compute_hash(self) -> bytes:
        return sha256(canonical_json(self.header_dict()))

    def sealed(self) -> "Block":
        return Block(self.number, self.parent_hash, self.timestamp, self.transactions,
                     self.receipts, self.compute_hash())

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "block", **self.header_dict(), "block_hash": self.block_hash.hex()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Block":
        return cls(int(d["number"]), bytes.fromhex(d["parent_hash"]), int(d["timestamp"]),
                   tuple(Transaction.from_dict(t) for t in d["transactions"]),
                   tuple(Receipt.from_dict(r) for r in d["receipts"]),
                   bytes.fromhex(d["block_hash"]))

    @property
    def logs(self) -> Iterator[LogEntry]:
        for receipt in self.receipts:
            yield from receipt.logs


@dataclass
class _LogIndex:
    all: list[LogEntry] = field(default_factory=list)
    by_topic: dict[tuple[int, bytes], list[LogEntry]] = field(default_factory=dict)

    def add(self, entry: LogEntry) -> None:
        self.all.append(entry)
        for pos, topic in enumerate(entry.topics):
            self.by_topic.setdefault((pos, topic), []).append(entry)


class Ledger:
    """Append-only chain executing calls against one provenance contract.

    Submission is serialised behind a lock; readers see only sealed blocks.
    """

    def __init__(self, schedule: GasSchedule | None = None,
                 contract: ProvenanceContract | None = None,
                 genesis_time: int = GENESIS_TIME):
        self.schedule = schedule or GasSchedule.default()
        self.contract = contract or ProvenanceContract()
        self.genesis_time = genesis_time
        self._lock = threading.RLock()
        self._nonces: dict[AccountAddress, int] = {}
        self._blocks: list[Block] = []
        self._index = _LogIndex()
        self._append(Block(0, ZERO_HASH, genesis_time, (), ()).sealed())

    # accounts ----------------------------------------------------------------

    def create_account(self, address: AccountAddress) -> AccountAddress:
        address = AccountAddress(address)
        with self._lock:
            self._nonces.setdefault(address, 0)
        return address

    def has_account(self, address: bytes) -> bool:
        return address in self._nonces

    @property
    def accounts(self) -> list[AccountAddress]:
        with self._lock:
            return list(self._nonces)

    def next_nonce(self, address: AccountAddress) -> int:
        try:
            return self._nonces[address]
        except KeyError:
            raise UnknownAccount(str(address)) from None

    # transactions ------------------------------------------------------------

    def submit_transaction(self, tx: Transaction) -> Receipt:
        with self._lock:
            if tx.function in VIEW_FUNCTIONS:
                raise UnknownFunction(f"{tx.function} is a view; use call()")
            expected = self.next_nonce(tx.sender)
            if tx.nonce != expected:
                raise BadNonce(f"{tx.sender}: expected nonce {expected}, got {tx.nonce}")
            if tx.gas_limit > self.schedule.block_gas_limit:
                raise GasLimitExceeded(
                    f"gas_limit {tx.gas_limit} above block limit {self.schedule.block_gas_limit}")
            args = decode_call(tx.function, tx.args)
            gas = self.schedule.estimate(tx.function, *self.contract.measure(tx.function, args))
            if gas > tx.gas_limit:
                raise GasLimitExceeded(f"{tx.function} needs {gas} gas, limit {tx.gas_limit}")

            return self._apply(tx, args, gas)

    def _apply(self, tx: Transaction, args: dict[str, Any], gas: int) -> Receipt:
        number = len(self._blocks)
        scratch = self.contract.copy()
        try:
            events = scratch.execute(tx.sender, tx.function, args, self._nonces)
        except ContractError as exc:
            log.debug("tx %s reverted: %s", tx.function, exc.name)
            receipt = Receipt("reverted", gas, (), exc.name)
        else:
            self.contract = scratch
            receipt = Receipt("success", gas, self._position(events, number))
        self._nonces[tx.sender] += 1
        parent = self._blocks[-1]
        block = Block(number, parent.block_hash, self.genesis_time + number, (tx,), (receipt,))
        self._append(block.sealed())
        return receipt

    def transact(self, sender: AccountAddress, function: str, gas_limit: int | None = None,
                 **args: Any) -> Receipt:
        """Encode, number and submit a call from ``sender``."""
        with self._lock:
            tx = Transaction(sender, function, encode_call(function, **args),
                             gas_limit or self.schedule.block_gas_limit, self.next_nonce(sender))
            return self.submit_transaction(tx)

    def call(self, function: str, sender: AccountAddress | None = None, **args: Any):
        """Run a call without committing it.

        Views return their value; state-changing calls return the events they
        would emit, or raise the ContractError they would revert with.
        """
        decoded = decode_call(function, encode_call(function, **args))
        with self._lock:
            if function == "getMaintainer":
                return self.contract.get_maintainer(decoded["asset_id"])
            return self.contract.copy().execute(sender, function, decoded, self._nonces)

    def get_maintainer(self, asset_id: bytes) -> AccountAddress:
        return self.call("getMaintainer", asset_id=asset_id)

    @staticmethod
    def _position(events: Iterable[Event], number: int) -> tuple[LogEntry, ...]:
        return tuple(LogEntry(ProvenanceContract.address, ev.topics, ev.data, number, 0, i)
                     for i, ev in enumerate(events))

    def _append(self, block: Block) -> None:
        self._blocks.append(block)
        for entry in block.logs:
            self._index.add(entry)

    # reads -------------------------------------------------------------------

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    @property
    def blocks(self) -> tuple[Block, ...]:
        with self._lock:
            return tuple(self._blocks)

    def get_block(self, number: int) -> Block:
        return self._blocks[number]

    def get_transaction(self, block_number: int, tx_index: int = 0) -> Transaction:
        return self._blocks[block_number].transactions[tx_index]

    def get_logs(self, contract: bytes | None = None, topic0: bytes | None = None,
                 topic1: bytes | None = None, topic2: bytes | None = None,
                 from_block: int | None = None, to_block: int | None = None) -> list[LogEntry]:
        """Logs matching every set field, in chain order."""
        wanted = [(i, bytes(t)) for i, t in enumerate((topic0, topic1, topic2)) if t is not None]
        with self._lock:
            if wanted:
                candidates = min((self._index.by_topic.get(key, []) for key in wanted), key=len)
            else:
                candidates = self._index.all
            candidates = list(candidates)
        lo = 0 if from_block is None else from_block
        hi = float("inf") if to_block is None else to_block
        return [
            entry for entry in candidates
            if lo <= entry.block_number <= hi
            and (contract is None or entry.contract == contract)
            and all(len(entry.topics) > i and entry.topics[i] == t for i, t in wanted)
        ]

    def verify_chain(self) -> bool:
        """True iff every block hash recomputes and every parent link holds."""
        parent = ZERO_HASH
        for number, block in enumerate(self.blocks):
            if block.number != number or block.parent_hash != parent:
                return False
            if block.compute_hash() != block.block_hash:
                return False
            for receipt in block.receipts:
                if any(e.block_number != number for e in receipt.logs):
                    return False
            parent = block.block_hash
        return True

    # persistence -------------------------------------------------------------

    def dumps(self) -> bytes:
        lines = [canonical_json({"kind": "header", "format": FORMAT,
                                 "genesis_time": self.genesis_time,
                                 "contract": self.contract.address.hex()})]
        with self._lock:
            lines += [canonical_json({"kind": "account", "address": a.hex()}) for a in self._nonces]
            lines += [canonical_json(b.to_dict()) for b in self._blocks]
        return b"\n".join(lines) + b"\n"

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(self.dumps())
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    @classmethod
    def loads(cls, data: bytes, schedule: GasSchedule | None = None) -> "Ledger":
        """Rebuild a ledger by replaying a persisted chain.

        Each line must be in canonical form and every block must re-execute to
        the same receipts; anything else raises ChainCorrupted.
        """
        try:
            lines = data.split(b"\n")
            if lines[-1] != b"":
                raise ValueError("missing trailing newline")
            records = []
            for line in lines[:-1]:
                record = json.loads(line.decode())
                if canonical_json(record) != line:
                    raise ValueError("non-canonical line")
                records.append(record)
            header = records[0]
            if header.get("kind") != "header" or header.get("format") != FORMAT:
                raise ValueError("bad header")
            ledger = cls(schedule, genesis_time=int(header["genesis_time"]))
            blocks = []
            for record in records[1:]:
                if record["kind"] == "account":
                    address = AccountAddress.from_hex(record["address"])
                    decoded = {"kind": "account", "address": address.hex()}
                    ledger.create_account(address)
                elif record["kind"] == "block":
                    blocks.append(Block.from_dict(record))
                    decoded = blocks[-1].to_dict()
                else:
                    raise ValueError(f"unknown record kind {record['kind']!r}")
                # hex case and similar aliases would otherwise decode to the same block
                if decoded != record:
                    raise ValueError("record does not round-trip")
        except (ValueError, KeyError, TypeError, IndexError, UnicodeDecodeError) as exc:
            raise ChainCorrupted(f"unreadable chain: {exc}") from exc
        if not blocks or blocks[0] != ledger._blocks[0]:
            raise ChainCorrupted("genesis block mismatch")
        for stored in blocks[1:]:
            ledger._replay(stored)
        return ledger

    def _replay(self, stored: Block) -> None:
        if len(stored.transactions) != 1:
            raise ChainCorrupted(f"block {stored.number}: expected one transaction")
        tx = stored.transactions[0]
        stored_receipt = stored.receipts[0]
        try:
            if self.next_nonce(tx.sender) != tx.nonce:
                raise BadNonce(f"nonce {tx.nonce}")
            if not 0 < stored_receipt.gas_used <= tx.gas_limit:
                raise GasLimitExceeded(f"recorded gas {stored_receipt.gas_used}")
            receipt = self._apply(tx, tx.decoded_args(), stored_receipt.gas_used)
        except Exception as exc:
            raise ChainCorrupted(f"block {stored.number} does not replay: {exc}") from exc
        replayed = self._blocks[-1]
        if (replayed.number, replayed.parent_hash, replayed.timestamp) != (
                stored.number, stored.parent_hash, stored.timestamp):
            raise ChainCorrupted(f"block {stored.number}: header mismatch")
        if receipt != stored_receipt:
            raise ChainCorrupted(f"block {stored.number}: receipt mismatch")
        self._blocks[-1] = stored
        if stored.compute_hash() != stored.block_hash:
            raise ChainCorrupted(f"block {stored.number}: hash mismatch")

    @classmethod
    def load(cls, path: str | os.PathLike, schedule: GasSchedule | None = None) -> "Ledger":
        return cls.loads(Path(path).read_bytes(), schedule)


def verify_file(path: str | os.PathLike) -> bool:
    """Load and verify a persisted chain; any corruption yields False."""
    try:
        return Ledger.load(path).verify_chain()
    except ChainCorrupted:
        return False
