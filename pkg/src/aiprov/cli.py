"""``aiprov`` command line.

Exit codes: 0 on success, 1 for protocol errors (``error: <Name>: message``
on stderr), 2 for usage and configuration errors.
"""

from __future__ import annotations

import json
import re
import sys
from contextlib import contextmanager
from pathlib import Path

import click
from filelock import FileLock

from . import __version__
from .accounts import Account
from .client import Client, Keystore, pack_directory
from .config import DEFAULT_NAME, Config
from .contract import TOPICS
from .errors import AiprovError, ConfigError
from .exchange import DEFAULT_SEALING, SEALING_SCHEMES
from .ledger import Ledger
from .primitives import AccountAddress, AssetId
from .provenance import accessors as granted_to
from .provenance import build_ancestry, build_full, descendants, find_assets
from .provenance import export as export_graph
from .report import gas_report, load_labels
from .scenario import SCENARIOS, run_scenario
from .storage import ObjectStore

_HEX = re.compile(r"(0x)?[0-9a-fA-F]+")


class _Group(click.Group):
    """Maps package errors onto exit codes instead of tracebacks."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ConfigError as exc:
            click.echo(f"error: {exc.name}: {exc}", err=True)
            raise click.exceptions.Exit(2)
        except AiprovError as exc:
            click.echo(f"error: {exc.name}: {exc}", err=True)
            raise click.exceptions.Exit(1)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="aiprov")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), envvar="AIPROV_CONFIG",
              help=f"Config file (JSON or key = value). Defaults to ./{DEFAULT_NAME} if present.")
@click.option("--account", help="Act as this account (overrides the config).")
@click.pass_context
def main(ctx, config_path, account):
    """Register AI assets, exchange them confidentially and trace their provenance."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["account"] = account


def _config(ctx) -> Config:
    if "config" not in ctx.obj:
        cfg = Config.load(ctx.obj["config_path"])
        if ctx.obj["account"]:
            cfg.account = ctx.obj["account"]
            cfg.keystore = None
        ctx.obj["config"] = cfg
    return ctx.obj["config"]


@contextmanager
def _chain(ctx, write: bool = False):
    """Load the chain under its single-writer lock; save on clean exit if ``write``."""
    cfg = _config(ctx)
    if not cfg.chain.exists():
        raise ConfigError(f"no chain at {cfg.chain}; run `aiprov init` first")
    with FileLock(str(cfg.chain) + ".lock"):
        ledger = Ledger.load(cfg.chain, cfg.schedule())
        try:
            yield ledger
        finally:
            # reverted transactions are part of the chain too, so save on failure as well
            if write:
                ledger.save(cfg.chain)


def _client(ctx, ledger: Ledger) -> Client:
    cfg = _config(ctx)
    path = cfg.keystore_path()
    if not path.exists():
        raise ConfigError(f"no keystore at {path}; run `aiprov account new`")
    return Client(ledger, ObjectStore(cfg.store), Keystore.load(path))


def _asset(ledger: Ledger, ref: str) -> AssetId:
    """Asset by hex id or by unique registered name."""
    if len(ref.removeprefix("0x")) == 64 and _HEX.fullmatch(ref):
        return AssetId(ref)
    found = find_assets(ledger, ref)
    if len(found) != 1:
        what = "no asset" if not found else f"{len(found)} assets"
        raise click.BadParameter(f"{what} named {ref!r}", param_hint="ASSET")
    return found[0]


def _address(ctx, ref: str) -> AccountAddress:
    """Account by hex address or by keystore name."""
    if len(ref.removeprefix("0x")) == 40 and _HEX.fullmatch(ref):
        return AccountAddress(ref)
    path = _config(ctx).keystore_path(ref)
    if not path.exists():
        raise click.BadParameter(f"unknown account {ref!r}", param_hint="ACCOUNT")
    return Keystore.load(path).account.address


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


# setup ----------------------------------------------------------------------------

@main.command()
@click.option("--chain", default="chain.jsonl", show_default=True)
@click.option("--store", default="store", show_default=True)
@click.option("--keys", "keystore_dir", default="keys", show_default=True)
@click.pass_context
def init(ctx, chain, store, keystore_dir):
    """Create a config file, an empty chain and the store and key directories."""
    path = Path(ctx.obj["config_path"] or DEFAULT_NAME)
    if path.exists():
        raise ConfigError(f"{path} already exists")
    cfg = Config.from_mapping({"chain": chain, "store": store, "keystore_dir": keystore_dir,
                               "account": ctx.obj["account"]}, path.resolve().parent)
    if cfg.chain.exists():
        raise ConfigError(f"{cfg.chain} already exists")
    cfg.store.mkdir(parents=True, exist_ok=True)
    cfg.keystore_dir.mkdir(parents=True, exist_ok=True)
    cfg.chain.parent.mkdir(parents=True, exist_ok=True)
    Ledger(cfg.schedule()).save(cfg.chain)
    cfg.save(path)
    click.echo(f"initialised {cfg.chain}")


@main.group()
def account():
    """Manage local accounts."""


@account.command("new")
@click.argument("name")
@click.option("--seed", help="Derive the key from a seed (reproducible, not secret).")
@click.pass_context
def account_new(ctx, name, seed):
    """Create a keystore for NAME and announce the account on the chain."""
    path = _config(ctx).keystore_path(name)
    if path.exists():
        raise ConfigError(f"keystore {path} already exists")
    acct = Account.from_seed(name, seed) if seed else Account.generate(name)
    with _chain(ctx, write=True) as ledger:
        Keystore.create(path, acct)
        ledger.create_account(acct.address)
    click.echo(f"{name} {acct.address}")


@account.command("list")
@click.pass_context
def account_list(ctx):
    """List local keystores and their addresses."""
    for path in sorted(_config(ctx).keystore_dir.glob("*.json")):
        try:
            acct = Keystore.load(path).account
        except (ValueError, KeyError):
            continue
        click.echo(f"{acct.name} {acct.address}")


# protocol -------------------------------------------------------------------------

@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--name", required=True)
@click.option("--type", "asset_type", type=click.Choice(["dataset", "model", "operation"]),
              required=True)
@click.option("--description", default="")
@click.option("--parent", "parents", multiple=True, help="Parent asset id or name; repeatable.")
@click.pass_context
def register(ctx, path, name, asset_type, description, parents):
    """Encrypt, upload and register the file or directory at PATH."""
    path = Path(path)
    payload = pack_directory(path) if path.is_dir() else path.read_bytes()
    metadata = {"asset_type": asset_type, "description": description, "name": name}
    with _chain(ctx, write=True) as ledger:
        client = _client(ctx, ledger)
        asset_id = client.register_asset(payload, metadata, [_asset(ledger, p) for p in parents])
    click.echo(f"{asset_id} gas={client.last_receipt.gas_used}")


@main.command()
@click.argument("asset")
@click.option("--algorithm", type=click.Choice(sorted(SEALING_SCHEMES)), default=DEFAULT_SEALING,
              show_default=True)
@click.pass_context
def request(ctx, asset, algorithm):
    """Ask the maintainer of ASSET for access."""
    with _chain(ctx, write=True) as ledger:
        client = _client(ctx, ledger)
        req = client.request_asset(_asset(ledger, asset), algorithm)
    click.echo(f"requested {req.asset_id} block={req.block} gas={client.last_receipt.gas_used}")


@main.command()
@click.argument("asset")
@click.argument("accessor")
@click.pass_context
def grant(ctx, asset, accessor):
    """Seal the key of ASSET to ACCESSOR's pending request."""
    with _chain(ctx, write=True) as ledger:
        receipt = _client(ctx, ledger).grant(_asset(ledger, asset), _address(ctx, accessor))
    click.echo(f"granted gas={receipt.gas_used}")


@main.command()
@click.option("--mine", is_flag=True, help="Show requests this account made instead.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def pending(ctx, mine, as_json):
    """Open access requests for assets this account maintains."""
    with _chain(ctx) as ledger:
        client = _client(ctx, ledger)
        reqs = client.my_pending_requests() if mine else client.list_pending_requests()
    rows = [{"asset_id": str(r.asset_id), "accessor": str(r.accessor),
             "encryption_algorithm": r.encryption_algorithm, "block": r.block} for r in reqs]
    if as_json:
        click.echo(json.dumps(rows, indent=2))
    else:
        for r in rows:
            click.echo(f"{r['asset_id']} {r['accessor']} {r['encryption_algorithm']} "
                       f"block={r['block']}")


@main.command()
@click.argument("asset")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def fetch(ctx, asset, out):
    """Download and decrypt a granted ASSET to OUT."""
    with _chain(ctx) as ledger:
        payload = _client(ctx, ledger).fetch_asset(_asset(ledger, asset))
    Path(out).write_bytes(payload)
    click.echo(f"wrote {out} ({len(payload)} bytes)")


@main.command()
@click.argument("asset")
@click.argument("new_maintainer")
@click.pass_context
def transfer(ctx, asset, new_maintainer):
    """Hand maintainership of ASSET to NEW_MAINTAINER."""
    with _chain(ctx, write=True) as ledger:
        receipt = _client(ctx, ledger).transfer(_asset(ledger, asset),
                                                _address(ctx, new_maintainer))
    click.echo(f"transferred gas={receipt.gas_used}")


@main.command("add-url")
@click.argument("asset")
@click.argument("url")
@click.pass_context
def add_url(ctx, asset, url):
    """Announce another download location for ASSET."""
    with _chain(ctx, write=True) as ledger:
        try:
            receipt = _client(ctx, ledger).add_url(_asset(ledger, asset), url)
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="URL")
    click.echo(f"added gas={receipt.gas_used}")


# queries --------------------------------------------------------------------------

_FORMAT = click.option("--format", "fmt", type=click.Choice(["dot", "json"]), default="dot",
                       show_default=True)
_OUT = click.option("--out", type=click.Path(dir_okay=False), help="Write to a file.")


@main.command()
@click.argument("asset")
@_FORMAT
@_OUT
@click.pass_context
def trace(ctx, asset, fmt, out):
    """Ancestry graph of ASSET."""
    with _chain(ctx) as ledger:
        graph = build_ancestry(ledger, _asset(ledger, asset))
    _write(export_graph(graph, fmt), out)


@main.command()
@_FORMAT
@_OUT
@click.pass_context
def export(ctx, fmt, out):
    """Full provenance graph of the chain."""
    with _chain(ctx) as ledger:
        graph = build_full(ledger.get_logs(), ledger.get_transaction)
    _write(export_graph(graph, fmt), out)


@main.command()
@click.argument("asset")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def usages(ctx, asset, as_json):
    """Assets derived from ASSET, directly or transitively."""
    with _chain(ctx) as ledger:
        found = descendants(ledger, _asset(ledger, asset))
        names = build_full(ledger.get_logs(topic0=TOPICS["Register"])).nodes
    rows = sorted((str(a), names[a].name) for a in found)
    if as_json:
        click.echo(json.dumps([{"asset_id": a, "name": n} for a, n in rows], indent=2))
    else:
        for a, n in rows:
            click.echo(f"{a} {n}")


@main.command()
@click.argument("asset")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def accessors(ctx, asset, as_json):
    """Accounts that were granted ASSET."""
    with _chain(ctx) as ledger:
        rows = [(str(a), block) for a, block in granted_to(ledger, _asset(ledger, asset))]
    if as_json:
        click.echo(json.dumps([{"accessor": a, "block": b} for a, b in rows], indent=2))
    else:
        for a, b in rows:
            click.echo(f"{a} block={b}")


@main.command()
@click.pass_context
def verify(ctx):
    """Recheck every block hash and parent link."""
    with _chain(ctx) as ledger:
        ok = ledger.verify_chain()
    click.echo("ok" if ok else "corrupted")
    if not ok:
        raise click.exceptions.Exit(1)


@main.command("gas-report")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write CSV here.")
@click.option("--figure", type=click.Path(dir_okay=False), help="Also write a bar chart (PNG).")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def gas_report_cmd(ctx, csv_path, figure, as_json):
    """Gas and USD cents per action, with totals."""
    cfg = _config(ctx)
    with _chain(ctx) as ledger:
        report = gas_report(ledger, load_labels(cfg.chain), cfg.schedule())
    click.echo(report.to_json() if as_json else report.to_text(), nl=False)
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
    if figure:
        report.plot(figure)


@main.group()
def scenario():
    """Scripted scenarios."""


@scenario.command("run")
@click.argument("name", type=click.Choice(SCENARIOS))
@click.option("--dir", "workdir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Empty workspace to create the chain in.")
def scenario_run(name, workdir):
    """Replay scenario NAME into a fresh workspace."""
    run = run_scenario(name, workdir)
    click.echo(f"{name}: {len(run.assets)} assets, {run.ledger.height} transactions, "
               f"chain {run.config.chain}")


if __name__ == "__main__":
    sys.exit(main())
