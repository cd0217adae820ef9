import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiprov.contract import TOPICS, encode_call
from aiprov.errors import BadNonce, ChainCorrupted, GasLimitExceeded, UnknownAccount, UnknownFunction
from aiprov.gas import GasSchedule
from aiprov.ledger import GENESIS_TIME, ZERO_HASH, Block, Ledger, Transaction, verify_file
from aiprov.primitives import AccountAddress, AssetId, canonical_json, sha256

ALICE = AccountAddress(b"\x0a" * 20)
BOB = AccountAddress(b"\x0b" * 20)
URL = "store://" + "0" * 64


def aid(n):
    return AssetId(sha256(str(n).encode()))


def add(ledger, sender, n, parents=()):
    return ledger.transact(sender, "addAsset", asset_id=aid(n), metadata='{"name":"a%d"}' % n,
                           url=URL, parents=[aid(p) for p in parents])


@pytest.fixture
def chain():
    ledger = Ledger()
    ledger.create_account(ALICE)
    ledger.create_account(BOB)
    return ledger


def test_genesis_block():
    ledger = Ledger()
    genesis = ledger.get_block(0)
    assert ledger.height == 0
    assert genesis.parent_hash == ZERO_HASH and genesis.timestamp == GENESIS_TIME
    assert genesis.block_hash == genesis.compute_hash()


def test_one_block_per_transaction_with_deterministic_time(chain):
    add(chain, ALICE, 1)
    add(chain, BOB, 2, [1])
    assert chain.height == 2
    assert [b.timestamp for b in chain.blocks] == [GENESIS_TIME + i for i in range(3)]
    assert chain.get_block(2).parent_hash == chain.get_block(1).block_hash
    assert chain.verify_chain()


def test_success_receipt_positions_logs(chain):
    receipt = add(chain, ALICE, 1)
    assert receipt.ok and receipt.reason is None
    assert [e.position for e in receipt.logs] == [(1, 0, 0), (1, 0, 1)]
    assert receipt.gas_used == chain.schedule.estimate("addAsset", 0, len('{"name":"a1"}'), 72)


def test_revert_charges_gas_and_emits_nothing(chain):
    add(chain, ALICE, 1)
    receipt = chain.transact(BOB, "addUrl", asset_id=aid(1), url=URL)
    assert not receipt.ok and receipt.reason == "NotMaintainer"
    assert receipt.logs == () and receipt.gas_used > 0
    assert chain.next_nonce(BOB) == 1
    assert chain.get_maintainer(aid(1)) == ALICE


def test_nonce_and_limits(chain):
    args = encode_call("addUrl", asset_id=aid(1), url=URL)
    with pytest.raises(BadNonce):
        chain.submit_transaction(Transaction(ALICE, "addUrl", args, 100_000, 5))
    with pytest.raises(GasLimitExceeded):
        chain.submit_transaction(Transaction(ALICE, "addUrl", args, 100, 0))
    with pytest.raises(GasLimitExceeded):
        chain.submit_transaction(Transaction(ALICE, "addUrl", args, 10**9, 0))
    with pytest.raises(UnknownFunction):
        chain.submit_transaction(Transaction(ALICE, "getMaintainer", b"{}", 100_000, 0))
    with pytest.raises(UnknownAccount):
        chain.transact(AccountAddress(b"\x0c" * 20), "addUrl", asset_id=aid(1), url=URL)
    assert chain.height == 0


def test_dry_run_call(chain):
    add(chain, ALICE, 1)
    events = chain.call("addUrl", ALICE, asset_id=aid(1), url=URL)
    assert [e.name for e in events] == ["URL"]
    assert chain.height == 1
    assert chain.call("getMaintainer", asset_id=aid(1)) == ALICE


def test_get_logs_filters(chain):
    add(chain, ALICE, 1)
    add(chain, ALICE, 2)
    add(chain, BOB, 3, [1, 2])
    parents = chain.get_logs(topic0=TOPICS["ParentOf"], topic1=aid(3))
    assert {e.topics[2] for e in parents} == {aid(1), aid(2)}
    assert chain.get_logs(topic0=TOPICS["Register"], from_block=2, to_block=2)[0].topics[1] == aid(2)
    assert chain.get_logs(contract=BOB) == []
    assert len(chain.get_logs()) == 2 + 2 + 6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.lists(st.integers(0, 30), max_size=3)),
                min_size=1, max_size=15),
       st.integers(0, 6), st.integers(0, 20), st.integers(0, 20))
def test_get_logs_matches_brute_force(calls, pick, lo, hi):
    ledger = Ledger()
    senders = [ledger.create_account(ALICE), ledger.create_account(BOB)]
    for i, (who, parents) in enumerate(calls):
        ledger.transact(senders[who], "addAsset", asset_id=aid(i), metadata="{}", url=URL,
                        parents=sorted({aid(p) for p in parents if p < i}))
    everything = [e for b in ledger.blocks for e in b.logs]
    topic0 = list(TOPICS.values())[pick]
    topic1 = aid(pick)
    expected = [e for e in everything if e.topics[0] == topic0 and e.topics[1] == topic1
                and lo <= e.block_number <= hi]
    assert ledger.get_logs(topic0=topic0, topic1=topic1, from_block=lo, to_block=hi) == expected
    assert ledger.get_logs() == everything


def test_persistence_roundtrip(chain, tmp_path):
    add(chain, ALICE, 1)
    add(chain, BOB, 2, [1])
    chain.transact(BOB, "transfer", asset_id=aid(1), new_maintainer=BOB)  # reverts
    path = tmp_path / "chain.jsonl"
    chain.save(path)
    loaded = Ledger.load(path)
    assert loaded.blocks == chain.blocks
    assert loaded.contract.snapshot() == chain.contract.snapshot()
    assert loaded.dumps() == chain.dumps()
    assert verify_file(path)


def test_replay_keeps_recorded_gas_under_new_schedule(chain):
    add(chain, ALICE, 1)
    cheaper = GasSchedule.default().with_overrides(function_base={"addAsset": 1})
    loaded = Ledger.loads(chain.dumps(), cheaper)
    assert loaded.get_block(1).receipts[0].gas_used == chain.get_block(1).receipts[0].gas_used


@pytest.mark.parametrize("mutate", [
    lambda r: r["receipts"][0].update(gas_used=10**9),
    lambda r: r["receipts"][0]["logs"][0].update(data="00"),
    lambda r: r["transactions"][0].update(nonce=3),
    lambda r: r.update(timestamp=r["timestamp"] + 1),
])
def test_rehashed_forgeries_are_caught_by_replay(chain, mutate):
    add(chain, ALICE, 1)
    lines = chain.dumps().split(b"\n")
    record = json.loads(lines[-2])
    mutate(record)
    forged = Block.from_dict(record)
    record["block_hash"] = forged.compute_hash().hex()
    lines[-2] = canonical_json(record)
    with pytest.raises(ChainCorrupted):
        Ledger.loads(b"\n".join(lines))


def test_loads_rejects_garbage():
    for data in (b"", b"not json\n", b'{"kind":"header","format":"other/9"}\n'):
        with pytest.raises(ChainCorrupted):
            Ledger.loads(data)


def test_verify_chain_detects_in_memory_tamper(chain):
    add(chain, ALICE, 1)
    add(chain, ALICE, 2)
    block = chain._blocks[1]
    chain._blocks[1] = replace(block, timestamp=block.timestamp + 1)
    assert not chain.verify_chain()


@pytest.mark.parametrize("field", ["block_hash", "address"])
def test_uppercase_hex_alias_is_rejected(chain, field):
    add(chain, ALICE, 1)
    data = chain.dumps()
    start = data.index(f'"{field}":"'.encode()) + len(field) + 4
    end = data.index(b'"', start)
    value = data[start:end]
    assert value != value.upper()
    with pytest.raises(ChainCorrupted):
        Ledger.loads(data[:start] + value.upper() + data[end:])
