"""Scripted multi-actor scenarios replayed against a fresh workspace.

A script names its actors (with seeds for deterministic accounts), its
assets (payload, metadata, parents) and an ordered list of labelled steps.
Each step is one or more actions: ``register``, ``request``, ``grant`` or
``fetch`` (off chain).  Every block a step produces carries the step's label
in the gas report.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .accounts import Account
from .client import Client, Keystore
from .config import DEFAULT_NAME, Config
from .errors import ConfigError, HashMismatch
from .gas import GasSchedule
from .ledger import Ledger
from .primitives import AssetId
from .report import save_labels
from .storage import ObjectStore

SCENARIOS = ("tum",)


def load_script(name: str) -> dict[str, Any]:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}")
    text = resources.files("aiprov.data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def asset_metadata(spec: dict[str, Any]) -> dict[str, str]:
    return {"asset_type": spec["asset_type"], "description": spec["description"],
            "name": spec["name"]}


@dataclass
class ScenarioRun:
    config: Config
    ledger: Ledger
    clients: dict[str, Client]
    assets: dict[str, AssetId]
    labels: dict[int, str]
    script: dict[str, Any]
    fetched: dict[tuple[str, str], bytes] = field(default_factory=dict)

    def asset(self, name: str) -> AssetId:
        """Asset id by script key or by display name."""
        if name in self.assets:
            return self.assets[name]
        for key, spec in self.script["assets"].items():
            if spec["name"] == name and key in self.assets:
                return self.assets[key]
        raise KeyError(name)


def run_scenario(name: str, workdir: str | os.PathLike,
                 schedule: GasSchedule | None = None,
                 script: dict[str, Any] | None = None) -> ScenarioRun:
    """Replay a script into ``workdir`` (chain, store, keystores, config, labels)."""
    script = script or load_script(name)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    config = Config(chain=workdir / "chain.jsonl", store=workdir / "store",
                    keystore_dir=workdir / "keys")
    if config.chain.exists():
        raise ConfigError(f"{config.chain} already exists; use an empty workspace")
    ledger = Ledger(schedule or config.schedule())
    store = ObjectStore(config.store)
    clients = {}
    for actor in script["actors"]:
        account = Account.from_seed(actor["name"], actor["seed"])
        keystore = Keystore.create(config.keystore_path(actor["name"]), account)
        clients[actor["name"]] = Client(ledger, store, keystore)
    config.account = script["actors"][0]["name"]

    specs = script["assets"]
    assets: dict[str, AssetId] = {}
    labels: dict[int, str] = {}
    fetched: dict[tuple[str, str], bytes] = {}
    for step in script["steps"]:
        first = ledger.height + 1
        for action in step["actions"]:
            client = clients[action["actor"]]
            key = action["asset"]
            verb = action["do"]
            if verb == "register":
                spec = specs[key]
                assets[key] = client.register_asset(
                    spec["payload"].encode(), asset_metadata(spec),
                    [assets[p] for p in spec["parents"]])
            elif verb == "request":
                client.request_asset(assets[key])
            elif verb == "grant":
                client.grant(assets[key], clients[action["accessor"]].address)
            elif verb == "fetch":
                payload = client.fetch_asset(assets[key])
                if payload != specs[key]["payload"].encode():
                    raise HashMismatch(f"{key}: fetched payload differs from the fixture")
                fetched[(action["actor"], key)] = payload
            else:
                raise ConfigError(f"unknown scenario action {verb!r}")
        for block in range(first, ledger.height + 1):
            labels[block] = step["label"]

    ledger.save(config.chain)
    save_labels(config.chain, labels)
    config.save(workdir / DEFAULT_NAME)
    return ScenarioRun(config, ledger, clients, assets, labels, script, fetched)
