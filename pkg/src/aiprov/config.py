"""Workspace configuration: file (JSON or ``key = value``), environment, defaults.

Environment variables use the ``AIPROV_`` prefix: ``AIPROV_CHAIN``,
``AIPROV_STORE``, ``AIPROV_KEYSTORE_DIR``, ``AIPROV_KEYSTORE``,
``AIPROV_ACCOUNT``, ``AIPROV_GAS_PRICE`` and ``AIPROV_ETH_USD``.  They
override the file.  Relative paths in a file resolve against the file's
directory; everywhere else against the working directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .gas import GasSchedule

ENV_PREFIX = "AIPROV_"
DEFAULT_NAME = "aiprov.json"
_PATH_KEYS = ("chain", "store", "keystore_dir", "keystore")
_KEYS = (*_PATH_KEYS, "account", "gas", "gas_price", "eth_usd")


@dataclass
class Config:
    chain: Path = Path("chain.jsonl")
    store: Path = Path("store")
    keystore_dir: Path = Path("keys")
    keystore: Path | None = None
    account: str | None = None
    gas: dict[str, Any] = field(default_factory=dict)
    gas_price: float | None = None
    eth_usd: float | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Path | None = None) -> "Config":
        unknown = set(data) - set(_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = dict(data)
        base = base or Path.cwd()
        for key in _PATH_KEYS:
            if values.get(key) is not None:
                path = Path(values[key]).expanduser()
                values[key] = path if path.is_absolute() else base / path
        if not isinstance(values.get("gas", {}), dict):
            raise ConfigError("gas must be a mapping of schedule overrides")
        for key in ("gas_price", "eth_usd"):
            if values.get(key) is not None:
                try:
                    values[key] = float(values[key])
                except (TypeError, ValueError):
                    raise ConfigError(f"{key} must be a number") from None
        cfg = cls(**values)
        for key in _PATH_KEYS:
            if key not in values and getattr(cfg, key) is not None:
                setattr(cfg, key, base / getattr(cfg, key))
        cfg.schedule()  # reject bad gas overrides early
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike | None = None,
             env: Mapping[str, str] | None = None) -> "Config":
        """Read the config file (if any), then apply environment overrides."""
        env = os.environ if env is None else env
        data: dict[str, Any] = {}
        base = Path.cwd()
        if path is None and Path(DEFAULT_NAME).is_file():
            path = DEFAULT_NAME
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            data = parse(text, str(path))
            base = path.resolve().parent
        cfg = cls.from_mapping(data, base)
        overrides = {k: env[ENV_PREFIX + k.upper()] for k in _KEYS
                     if k != "gas" and ENV_PREFIX + k.upper() in env}
        if overrides:
            merged = {**cfg.to_dict(), **overrides}
            cfg = cls.from_mapping(merged, Path.cwd())
        return cfg

    def to_dict(self, relative_to: Path | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key in _KEYS:
            value = getattr(self, key)
            if value is None or (key == "gas" and not value):
                continue
            if isinstance(value, Path):
                value = os.path.relpath(value, relative_to) if relative_to else str(value)
            out[key] = value
        return out

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        doc = self.to_dict(relative_to=path.resolve().parent)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def schedule(self) -> GasSchedule:
        overrides = dict(self.gas)
        if self.gas_price is not None:
            overrides["gas_price"] = self.gas_price
        if self.eth_usd is not None:
            overrides["eth_usd"] = self.eth_usd
        try:
            return GasSchedule.default().with_overrides(**overrides)
        except TypeError as exc:
            raise ConfigError(f"bad gas override: {exc}") from None

    def keystore_path(self, account: str | None = None) -> Path:
        if account is None and self.keystore is not None:
            return self.keystore
        name = account or self.account
        if not name:
            raise ConfigError("no account configured; pass --account or set AIPROV_ACCOUNT")
        return self.keystore_dir / f"{name}.json"


def parse(text: str, source: str = "<config>") -> dict[str, Any]:
    """JSON object, or ``key = value`` lines with ``gas.<field>`` for schedule overrides."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: expected a JSON object")
        return data
    data: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        try:
            parsed: Any = json.loads(value)
        except ValueError:
            parsed = value
        if key.startswith("gas."):
            target = data.setdefault("gas", {})
            *parents, leaf = key[4:].split(".")
            for part in parents:
                target = target.setdefault(part, {})
            target[leaf] = parsed
        else:
            data[key] = parsed
    return data
