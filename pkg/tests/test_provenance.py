import json

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiprov.contract import TOPICS
from aiprov.errors import InconsistentLogs, UnknownAsset
from aiprov.ledger import Ledger, LogEntry
from aiprov.primitives import AccountAddress, AssetId, sha256
from aiprov.provenance import (
    AssetNode,
    ProvenanceGraph,
    accessors,
    build_ancestry,
    build_full,
    descendants,
    export,
    find_assets,
    replay_maintainers,
)

from conftest import GOLDEN_EDGES

URL = "store://" + "0" * 64


def full(ledger):
    return build_full(ledger.get_logs(), ledger.get_transaction)


def named_edges(graph):
    return {(graph.nodes[p].name, graph.nodes[c].name) for p, c in graph.edges}


def test_scenario_graph_matches_golden_lineage(tum):
    graph = full(tum.ledger)
    assert len(graph) == 11
    assert named_edges(graph) == GOLDEN_EDGES
    assert graph.find_cycle() is None
    types = {n.name: n.asset_type for n in graph.nodes.values()}
    assert types["Model A"] == "model" and types["split algorithm"] == "operation"


def test_archive_ancestry(tum):
    archive = tum.assets["archive"]
    graph = build_ancestry(tum.ledger, archive)
    assert {n.name for n in graph.nodes.values()} == {
        "train/val archive", "labeled data", "split algorithm", "unlabeled data",
        "preprocessing algorithm", "RAW data", "data management algorithm"}
    assert graph.edges == full(tum.ledger).ancestry(archive).edges


def test_raw_descendants(tum):
    found = descendants(tum.ledger, tum.assets["raw"])
    assert found == {tum.assets[k] for k in ("unlabeled", "labeled", "archive", "model_a",
                                             "model_b")}


def test_scenario_accessors(tum):
    ext = tum.clients["ExternalDataScientist"].address
    assert [a for a, _ in accessors(tum.ledger, tum.assets["archive"])] == [ext]
    assert accessors(tum.ledger, tum.assets["model_b"]) == []


def test_unknown_asset_queries(ledger):
    missing = AssetId(b"\x01" * 32)
    for query in (build_ancestry, descendants, accessors):
        with pytest.raises(UnknownAsset):
            query(ledger, missing)


def test_maintainer_history_follows_transfers(ledger):
    a, b = ledger.create_account(b"\x0a" * 20), ledger.create_account(b"\x0b" * 20)
    asset = AssetId(sha256(b"x"))
    ledger.transact(a, "addAsset", asset_id=asset, metadata='{"name":"x"}', url=URL, parents=[])
    ledger.transact(a, "transfer", asset_id=asset, new_maintainer=b)
    node = build_ancestry(ledger, asset).nodes[asset]
    assert node.maintainer_history == [a, b]
    assert full(ledger).nodes[asset].maintainer_history == [a, b]
    assert replay_maintainers(ledger) == ledger.contract.snapshot()


def test_exports_are_deterministic_and_sorted(tum):
    graph = full(tum.ledger)
    doc = json.loads(export(graph, "json"))
    ids = [n["id"] for n in doc["nodes"]]
    assert ids == sorted(ids) and len(ids) == 11
    assert len(doc["edges"]) == 10
    assert export(graph, "json") == export(full(tum.ledger), "json")
    dot = export(graph, "dot")
    assert dot.startswith("digraph provenance {")
    assert '[label="train/val archive", shape=box]' in dot
    assert '[label="Model B", shape=diamond]' in dot
    assert '[label="split algorithm", shape=ellipse]' in dot
    assert dot.count(" -> ") == 10
    with pytest.raises(ValueError):
        export(graph, "svg")


def test_dot_escapes_labels():
    node_id = AssetId(b"\x02" * 32)
    graph = ProvenanceGraph({node_id: AssetNode(node_id, {"name": 'a "q"\\'}, 1)})
    assert r'label="a \"q\"\\"' in export(graph, "dot")


def test_find_assets(tum):
    assert find_assets(tum.ledger, "RAW data") == [tum.assets["raw"]]
    assert find_assets(tum.ledger, "nothing") == []


def _log(name, *topics, block=1, data=b""):
    return LogEntry(AccountAddress(b"\x00" * 20), (TOPICS[name], *topics), data, block, 0, 0)


def test_unmirrored_link_is_inconsistent():
    a, b = AssetId(b"\x01" * 32), AssetId(b"\x02" * 32)
    logs = [_log("Register", a, data=b"{}"), _log("Register", b, block=2, data=b"{}"),
            _log("ParentOf", b, a, block=2)]
    with pytest.raises(InconsistentLogs):
        build_full(logs)
    assert len(build_full(logs + [_log("ChildOf", a, b, block=2)]).edges) == 1


def test_dangling_edge_and_bad_metadata_are_inconsistent():
    a, b = AssetId(b"\x01" * 32), AssetId(b"\x02" * 32)
    with pytest.raises(InconsistentLogs):
        build_full([_log("ParentOf", b, a), _log("ChildOf", a, b)])
    with pytest.raises(InconsistentLogs):
        build_full([_log("Register", a, data=b"nope")])


def test_cycle_detector_finds_cycles():
    ids = [AssetId(bytes([i]) * 32) for i in range(4)]
    graph = ProvenanceGraph({}, {(ids[0], ids[1]), (ids[1], ids[2]), (ids[2], ids[0]),
                                 (ids[2], ids[3])})
    cycle = graph.find_cycle()
    assert cycle[0] == cycle[-1] and set(cycle) == set(ids[:3])
    assert ProvenanceGraph({}, {(ids[0], ids[1])}).find_cycle() is None


def build_random_chain(ledger, parent_lists):
    sender = ledger.create_account(b"\x0a" * 20)
    ids = [AssetId(sha256(f"asset-{i}".encode())) for i in range(len(parent_lists))]
    for i, parents in enumerate(parent_lists):
        ledger.transact(sender, "addAsset", asset_id=ids[i], metadata=json.dumps({"name": str(i)}),
                        url=URL, parents=[ids[p] for p in parents])
    return ids


def dag_strategy(max_nodes=25):
    return st.integers(1, max_nodes).flatmap(lambda n: st.tuples(*[
        st.sets(st.integers(0, max(i - 1, 0)), max_size=min(i, 5)) if i else st.just(set())
        for i in range(n)]))


@settings(max_examples=25, deadline=None)
@given(dag_strategy())
def test_walks_agree_with_networkx_closures(parent_sets):
    ledger = Ledger()
    ids = build_random_chain(ledger, [sorted(p) for p in parent_sets])
    oracle = nx.DiGraph()
    oracle.add_nodes_from(ids)
    oracle.add_edges_from((ids[p], ids[i]) for i, ps in enumerate(parent_sets) for p in ps)
    graph = full(ledger)
    assert graph.find_cycle() is None
    assert graph.edges == set(oracle.edges)
    for node in ids:
        assert set(build_ancestry(ledger, node).nodes) == nx.ancestors(oracle, node) | {node}
        assert descendants(ledger, node) == nx.descendants(oracle, node)
