"""Provenance graphs rebuilt from contract logs.

Two routes lead to the same graph.  :func:`build_full` scans every log and
serves as the reference; :func:`build_ancestry` and :func:`descendants` walk
the chain with topic-filtered queries only, starting at one asset.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

from .contract import TOPICS
from .errors import InconsistentLogs, UnknownAsset
from .primitives import AccountAddress, AssetId

ASSET_TYPES = ("dataset", "model", "operation")
_SHAPES = {"dataset": "box", "operation": "ellipse", "model": "diamond"}


class LogSource(Protocol):
    def get_logs(self, contract=None, topic0=None, topic1=None, topic2=None,
                 from_block=None, to_block=None) -> list: ...

    def get_transaction(self, block_number: int, tx_index: int = 0): ...


@dataclass
class AssetNode:
    asset_id: AssetId
    metadata: dict[str, Any]
    registered_block: int
    maintainer_history: list[AccountAddress] = field(default_factory=list)

    @property
    def name(self) -> str:
        return str(self.metadata.get("name", ""))

    @property
    def asset_type(self) -> str:
        return str(self.metadata.get("asset_type", ""))

    @property
    def maintainer(self) -> AccountAddress | None:
        return self.maintainer_history[-1] if self.maintainer_history else None


@dataclass
class ProvenanceGraph:
    """DAG of assets; an edge (parent, child) means parent was used to make child."""

    nodes: dict[AssetId, AssetNode] = field(default_factory=dict)
    edges: set[tuple[AssetId, AssetId]] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, asset_id: bytes) -> bool:
        return asset_id in self.nodes

    def parents_of(self, asset_id: bytes) -> set[AssetId]:
        return {p for p, c in self.edges if c == asset_id}

    def children_of(self, asset_id: bytes) -> set[AssetId]:
        return {c for p, c in self.edges if p == asset_id}

    def _closure(self, start: bytes, step: dict[AssetId, list[AssetId]]) -> set[AssetId]:
        seen: set[AssetId] = set()
        queue = deque([start])
        while queue:
            for nxt in step.get(queue.popleft(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        seen.discard(start)
        return seen

    def ancestors(self, asset_id: bytes) -> set[AssetId]:
        up: dict[AssetId, list[AssetId]] = {}
        for p, c in self.edges:
            up.setdefault(c, []).append(p)
        return self._closure(asset_id, up)

    def descendants(self, asset_id: bytes) -> set[AssetId]:
        down: dict[AssetId, list[AssetId]] = {}
        for p, c in self.edges:
            down.setdefault(p, []).append(c)
        return self._closure(asset_id, down)

    def subgraph(self, ids: Iterable[bytes]) -> "ProvenanceGraph":
        keep = set(ids)
        return ProvenanceGraph({k: v for k, v in self.nodes.items() if k in keep},
                               {(p, c) for p, c in self.edges if p in keep and c in keep})

    def ancestry(self, asset_id: bytes) -> "ProvenanceGraph":
        return self.subgraph(self.ancestors(asset_id) | {AssetId(asset_id)})

    def find_cycle(self) -> list[AssetId] | None:
        """Return one cycle as a node list, or None for a DAG."""
        down: dict[AssetId, list[AssetId]] = {}
        for p, c in sorted(self.edges):
            down.setdefault(p, []).append(c)
        state: dict[AssetId, int] = {}  # 1 = on stack, 2 = done
        for root in sorted(set(down)):
            if state.get(root):
                continue
            stack = [(root, iter(down.get(root, ())))]
            path = [root]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                    path.pop()
                elif state.get(nxt) == 1:
                    return path[path.index(nxt):] + [nxt]
                elif not state.get(nxt):
                    state[nxt] = 1
                    stack.append((nxt, iter(down.get(nxt, ()))))
                    path.append(nxt)
        return None

    def by_name(self, name: str) -> AssetNode:
        matches = [n for n in self.nodes.values() if n.name == name]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} assets named {name!r}")
        return matches[0]


def _metadata(data: bytes) -> dict[str, Any]:
    try:
        parsed = json.loads(data)
    except ValueError as exc:
        raise InconsistentLogs(f"unparseable metadata: {exc}") from None
    if not isinstance(parsed, dict):
        raise InconsistentLogs("metadata is not a JSON object")
    return parsed


def _new_maintainer(get_transaction, entry) -> AccountAddress:
    tx = get_transaction(entry.block_number, entry.tx_index)
    return tx.decoded_args()["new_maintainer"]


def _registrant(get_transaction, entry) -> AccountAddress:
    return get_transaction(entry.block_number, entry.tx_index).sender


def build_full(logs: Iterable, get_transaction: Callable | None = None) -> ProvenanceGraph:
    """Reference graph from a complete log scan.

    ``get_transaction(block, tx_index)`` resolves the transaction behind a
    log; with it, maintainer histories are filled in.
    """
    graph = ProvenanceGraph()
    parent_links: Counter = Counter()
    child_links: Counter = Counter()
    transfers = []
    for entry in sorted(logs, key=lambda e: e.position):
        topic0 = entry.topics[0]
        if topic0 == TOPICS["Register"]:
            asset_id = AssetId(entry.topics[1])
            history = [_registrant(get_transaction, entry)] if get_transaction else []
            graph.nodes[asset_id] = AssetNode(asset_id, _metadata(entry.data),
                                              entry.block_number, history)
        elif topic0 == TOPICS["ParentOf"]:
            child, parent = AssetId(entry.topics[1]), AssetId(entry.topics[2])
            parent_links[(entry.block_number, parent, child)] += 1
            graph.edges.add((parent, child))
        elif topic0 == TOPICS["ChildOf"]:
            parent, child = AssetId(entry.topics[1]), AssetId(entry.topics[2])
            child_links[(entry.block_number, parent, child)] += 1
        elif topic0 == TOPICS["FormerMaintainer"]:
            transfers.append(entry)
    if parent_links != child_links:
        raise InconsistentLogs("ParentOf and ChildOf events do not mirror each other")
    for p, c in graph.edges:
        if p not in graph.nodes or c not in graph.nodes:
            raise InconsistentLogs(f"edge endpoint not registered: {p.hex()} -> {c.hex()}")
    if get_transaction:
        for entry in transfers:
            graph.nodes[AssetId(entry.topics[1])].maintainer_history.append(
                _new_maintainer(get_transaction, entry))
    return graph


def _register_log(source: LogSource, asset_id: bytes):
    found = source.get_logs(topic0=TOPICS["Register"], topic1=asset_id)
    if not found:
        raise UnknownAsset(AssetId(asset_id).hex())
    return found[0]


def _node(source: LogSource, asset_id: AssetId) -> AssetNode:
    entry = _register_log(source, asset_id)
    history = [_registrant(source.get_transaction, entry)]
    for moved in source.get_logs(topic0=TOPICS["FormerMaintainer"], topic1=asset_id):
        history.append(_new_maintainer(source.get_transaction, moved))
    return AssetNode(asset_id, _metadata(entry.data), entry.block_number, history)


def build_ancestry(source: LogSource, asset_id: bytes) -> ProvenanceGraph:
    """Ancestor subgraph of one asset, walking ParentOf events breadth-first."""
    start = AssetId(asset_id)
    graph = ProvenanceGraph({start: _node(source, start)})
    queue = deque([start])
    while queue:
        child = queue.popleft()
        for entry in source.get_logs(topic0=TOPICS["ParentOf"], topic1=child):
            parent = AssetId(entry.topics[2])
            graph.edges.add((parent, child))
            if parent not in graph.nodes:
                graph.nodes[parent] = _node(source, parent)
                queue.append(parent)
    return graph


def descendants(source: LogSource, asset_id: bytes) -> set[AssetId]:
    """Every asset transitively derived from ``asset_id``, via ChildOf events."""
    _register_log(source, asset_id)
    start = AssetId(asset_id)
    seen: set[AssetId] = set()
    queue = deque([start])
    while queue:
        for entry in source.get_logs(topic0=TOPICS["ChildOf"], topic1=queue.popleft()):
            child = AssetId(entry.topics[2])
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return seen


def accessors(source: LogSource, asset_id: bytes) -> list[tuple[AccountAddress, int]]:
    """(accessor, block) for every GrantAccess on the asset, in chain order."""
    _register_log(source, asset_id)
    return [(AccountAddress.from_topic(e.topics[2]), e.block_number)
            for e in source.get_logs(topic0=TOPICS["GrantAccess"], topic1=asset_id)]


def replay_maintainers(source: LogSource) -> dict[AssetId, AccountAddress]:
    """Maintainer map rebuilt from Register and FormerMaintainer logs alone."""
    state: dict[AssetId, AccountAddress] = {}
    changes = (source.get_logs(topic0=TOPICS["Register"])
               + source.get_logs(topic0=TOPICS["FormerMaintainer"]))
    for entry in sorted(changes, key=lambda e: e.position):
        asset_id = AssetId(entry.topics[1])
        if entry.topics[0] == TOPICS["Register"]:
            state[asset_id] = _registrant(source.get_transaction, entry)
        else:
            if state.get(asset_id) != AccountAddress.from_topic(entry.topics[2]):
                raise InconsistentLogs(f"transfer of {asset_id.hex()} by a non-maintainer")
            state[asset_id] = _new_maintainer(source.get_transaction, entry)
    return state


def find_assets(source: LogSource, name: str) -> list[AssetId]:
    """Registered assets whose metadata name equals ``name``."""
    out = []
    for entry in source.get_logs(topic0=TOPICS["Register"]):
        try:
            if json.loads(entry.data).get("name") == name:
                out.append(AssetId(entry.topics[1]))
        except (ValueError, AttributeError):
            continue
    return out


# export -------------------------------------------------------------------------

def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export(graph: ProvenanceGraph, fmt: str = "dot") -> str:
    """Deterministic DOT or JSON rendering, sorted by asset id."""
    nodes = [graph.nodes[k] for k in sorted(graph.nodes)]
    edges = sorted(graph.edges)
    if fmt == "json":
        doc = {
            "nodes": [{"id": n.asset_id.hex(), "name": n.name, "asset_type": n.asset_type,
                       "maintainer": n.maintainer.hex() if n.maintainer else None}
                      for n in nodes],
            "edges": [{"parent": p.hex(), "child": c.hex()} for p, c in edges],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt != "dot":
        raise ValueError(f"unknown export format {fmt!r}")
    lines = ["digraph provenance {", "  rankdir=TB;"]
    for n in nodes:
        shape = _SHAPES.get(n.asset_type, "plaintext")
        lines.append(f"  {_dot_quote(n.asset_id.hex())} [label={_dot_quote(n.name)}, shape={shape}];")
    for p, c in edges:
        lines.append(f"  {_dot_quote(p.hex())} -> {_dot_quote(c.hex())};")
    lines.append("}")
    return "\n".join(lines) + "\n"
