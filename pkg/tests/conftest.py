import os

import pytest

from aiprov.accounts import Account
from aiprov.client import Client, Keystore
from aiprov.gas import GasSchedule
from aiprov.ledger import Ledger
from aiprov.scenario import run_scenario
from aiprov.storage import ObjectStore

os.environ.setdefault("MPLBACKEND", "Agg")

# reference gas table for the scenario: (label, gas, US cents)
TABLE = [
    ("TUM registers data management algorithm", 74_669, 15.7),
    ("TUM registers RAW data", 77_868, 16.4),
    ("TUM registers unlabeled data and preprocessing algorithm", 150_769, 31.7),
    ("TUM registers now labeled data", 80_321, 16.9),
    ("TUM registers split algorithm and train/val archive", 156_525, 32.9),
    ("ExternalDataScientist requests access for archive", 72_573, 15.2),
    ("TUM encrypts AEK for archive to grant access", 69_056, 14.5),
    ("TUM registers own model and algorithm", 149_296, 31.4),
    ("ExternalDataScientist registers their model and algorithm", 149_552, 31.4),
    ("TUM requests access for Model B", 72_573, 15.2),
]

# scenario lineage, by display name; an interpretation of the narrative
GOLDEN_EDGES = {
    ("data management algorithm", "RAW data"),
    ("RAW data", "unlabeled data"),
    ("preprocessing algorithm", "unlabeled data"),
    ("unlabeled data", "labeled data"),
    ("labeled data", "train/val archive"),
    ("split algorithm", "train/val archive"),
    ("train/val archive", "Model A"),
    ("TUM training algorithm", "Model A"),
    ("train/val archive", "Model B"),
    ("external training algorithm", "Model B"),
}

_acceptance: list[tuple[int, str, bool, str]] = []


def record_criterion(number, title, passed, detail=""):
    _acceptance.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_acceptance):
        line = f"[{'PASS' if passed else 'FAIL'}] {number}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))


@pytest.fixture
def schedule():
    return GasSchedule.default()


@pytest.fixture
def ledger():
    return Ledger()


@pytest.fixture
def store(tmp_path):
    return ObjectStore(tmp_path / "store")


@pytest.fixture
def make_client(ledger, store, tmp_path):
    def make(name, persist=True):
        path = tmp_path / "keys" / f"{name}.json" if persist else None
        keystore = Keystore(Account.from_seed(name, name), path)
        keystore.save()
        return Client(ledger, store, keystore)
    return make


@pytest.fixture(scope="session")
def tum(tmp_path_factory):
    return run_scenario("tum", tmp_path_factory.mktemp("tum"))
