import json

import pytest
from click.testing import CliRunner

from aiprov.cli import main
from aiprov.ledger import Ledger
from aiprov.provenance import build_ancestry, export, find_assets
from aiprov.report import gas_report, load_labels


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("AIPROV_CONFIG", raising=False)
    return CliRunner()


def run(runner, *args, code=0):
    result = runner.invoke(main, list(args))
    assert result.exit_code == code, result.output + result.stderr
    return result


@pytest.fixture
def workspace(runner, tmp_path):
    run(runner, "init")
    run(runner, "account", "new", "alice", "--seed", "a")
    run(runner, "account", "new", "bob", "--seed", "b")
    (tmp_path / "data.bin").write_bytes(b"secret bytes")
    return tmp_path


def test_register_request_grant_fetch(runner, workspace):
    out = run(runner, "--account", "alice", "register", "data.bin", "--name", "d",
              "--type", "dataset").output
    asset = out.split()[0]
    assert len(asset) == 66 and "gas=" in out
    run(runner, "--account", "bob", "request", "d")
    pending = json.loads(run(runner, "--account", "alice", "pending", "--json").output)
    assert [p["asset_id"] for p in pending] == [asset]
    run(runner, "--account", "alice", "grant", "d", "bob")
    run(runner, "--account", "bob", "fetch", asset, "--out", "got.bin")
    assert (workspace / "got.bin").read_bytes() == b"secret bytes"
    acc = json.loads(run(runner, "accessors", "d", "--json").output)
    assert len(acc) == 1
    assert run(runner, "verify").output == "ok\n"


def test_register_directory_with_parent(runner, workspace):
    run(runner, "--account", "alice", "register", "data.bin", "--name", "raw", "--type", "dataset")
    (workspace / "algo").mkdir()
    (workspace / "algo" / "train.py").write_text("print('hi')\n")
    run(runner, "--account", "alice", "register", "algo", "--name", "model", "--type", "model",
        "--parent", "raw")
    usages = json.loads(run(runner, "usages", "raw", "--json").output)
    assert [u["name"] for u in usages] == ["model"]
    dot = run(runner, "trace", "model").output
    assert dot.count(" -> ") == 1


def test_fetch_without_grant_exits_one(runner, workspace):
    run(runner, "--account", "alice", "register", "data.bin", "--name", "d", "--type", "dataset")
    run(runner, "--account", "bob", "request", "d")
    result = run(runner, "--account", "bob", "fetch", "d", "--out", "x", code=1)
    assert "error: NotGranted" in result.stderr
    assert not (workspace / "x").exists()


def test_reverted_transfer_is_persisted(runner, workspace):
    run(runner, "--account", "alice", "register", "data.bin", "--name", "d", "--type", "dataset")
    height = Ledger.load(workspace / "chain.jsonl").height
    result = run(runner, "--account", "bob", "transfer", "d", "bob", code=1)
    assert "error: NotMaintainer" in result.stderr
    assert Ledger.load(workspace / "chain.jsonl").height == height + 1


@pytest.mark.parametrize("args", [
    ("--account", "alice", "register", "data.bin", "--name", "d", "--type", "banana"),
    ("trace", "no-such-asset"),
    ("--account", "alice", "grant", "x" * 64, "nobody"),
    ("bogus-command",),
])
def test_usage_errors_exit_two(runner, workspace, args):
    run(runner, *args, code=2)


def test_missing_chain_and_keystore_are_config_errors(runner, tmp_path):
    result = run(runner, "verify", code=2)
    assert "error: ConfigError" in result.stderr
    run(runner, "init")
    run(runner, "init", code=2)
    result = run(runner, "--account", "ghost", "pending", code=2)
    assert "keystore" in result.stderr


def test_tampered_chain_fails_verify(runner, workspace):
    run(runner, "--account", "alice", "register", "data.bin", "--name", "d", "--type", "dataset")
    chain = workspace / "chain.jsonl"
    text = chain.read_text()
    assert '"timestamp":1577836801' in text
    chain.write_text(text.replace('"timestamp":1577836801', '"timestamp":1577836802'))
    result = run(runner, "verify", code=1)
    assert "ChainCorrupted" in result.stderr or "corrupted" in result.output


def test_scenario_cli_matches_library(runner, tmp_path):
    run(runner, "scenario", "run", "tum", "--dir", "w")
    cfg = ["--config", "w/aiprov.json"]
    ledger = Ledger.load(tmp_path / "w" / "chain.jsonl")

    trace = run(runner, *cfg, "trace", "train/val archive", "--format", "json").output
    (archive,) = find_assets(ledger, "train/val archive")
    assert trace == export(build_ancestry(ledger, archive), "json")

    report = run(runner, *cfg, "gas-report", "--csv", "g.csv", "--figure", "g.png").output
    expected = gas_report(ledger, load_labels(tmp_path / "w" / "chain.jsonl"))
    assert report == expected.to_text()
    assert (tmp_path / "g.csv").read_text() == expected.to_csv()
    assert (tmp_path / "g.png").read_bytes()[:4] == b"\x89PNG"


def test_scenario_runs_are_deterministic(runner, tmp_path):
    # the chain bytes differ between runs (sealing uses fresh ephemeral keys); the
    # gas figures and the lineage must not
    outputs = []
    for d in ("one", "two"):
        run(runner, "scenario", "run", "tum", "--dir", d)
        cfg = ["--config", f"{d}/aiprov.json"]
        outputs.append((run(runner, *cfg, "gas-report", "--json").output,
                        run(runner, *cfg, "export", "--format", "dot").output))
    assert outputs[0] == outputs[1]
    run(runner, "scenario", "run", "tum", "--dir", "one", code=2)
