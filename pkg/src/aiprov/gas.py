"""Calibrated gas model.

This is a surrogate, not an EVM.  Costs are assembled from the intrinsic
transaction cost, a per-function base, the log costs of the events a call
emits, a per-parent charge for lineage links and the size of the variable
data fields.  The shipped constants live in ``data/gas_schedule.json``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from math import ceil
from typing import Any, Mapping

from .contract import FUNCTION_EVENTS, FUNCTIONS, VIEW_FUNCTIONS
from .errors import ConfigError, UnknownFunction

WORD = 32


@dataclass(frozen=True)
class GasSchedule:
    tx_base: int = 21_000
    log_base: int = 375
    log_topic: int = 375
    log_data_byte: int = 8
    # memory expansion per 32-byte word of event data; 0 disables
    log_data_word: int = 3
    per_parent_overhead: int = 0
    function_base: Mapping[str, int] = field(default_factory=dict)
    block_gas_limit: int = 7_000_000
    gas_price: float = 1e-8
    eth_usd: float = 210.0

    def __post_init__(self):
        object.__setattr__(self, "function_base", dict(self.function_base))
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "function_base":
                if any(v < 0 for v in value.values()):
                    raise ConfigError("function_base entries must be non-negative")
                unknown = set(value) - set(FUNCTIONS)
                if unknown:
                    raise ConfigError(f"function_base names unknown functions: {sorted(unknown)}")
            elif value < 0:
                raise ConfigError(f"{f.name} must be non-negative")
        if self.block_gas_limit <= self.tx_base:
            raise ConfigError("block_gas_limit must exceed tx_base")

    @classmethod
    def default(cls) -> "GasSchedule":
        text = resources.files("aiprov.data").joinpath("gas_schedule.json").read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GasSchedule":
        known = {f.name for f in fields(cls)}
        unknown = {k for k in data if not k.startswith("_")} - known
        if unknown:
            raise ConfigError(f"unknown gas schedule keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> "GasSchedule":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown gas schedule keys: {sorted(unknown)}")
        if "function_base" in overrides:
            overrides["function_base"] = {**self.function_base, **overrides["function_base"]}
        return replace(self, **overrides)

    # costs -------------------------------------------------------------------

    def data_cost(self, n_bytes: int) -> int:
        return self.log_data_byte * n_bytes + self.log_data_word * ceil(n_bytes / WORD)

    def event_cost(self, topics: int, data_bytes: int) -> int:
        return self.log_base + self.log_topic * topics + self.data_cost(data_bytes)

    def estimate(self, function: str, n_parents: int = 0, metadata_bytes: int = 0,
                 data_bytes: int = 0) -> int:
        """Gas charged for one call with the given variable sizes."""
        if function in VIEW_FUNCTIONS:
            return 0
        if function not in FUNCTION_EVENTS:
            raise UnknownFunction(function)
        if min(n_parents, metadata_bytes, data_bytes) < 0:
            raise ValueError("sizes must be non-negative")
        sizes = {"metadata": metadata_bytes, "data": data_bytes, None: 0}
        gas = self.tx_base + self.function_base.get(function, 0)
        for _, topics, carries in FUNCTION_EVENTS[function]:
            gas += self.event_cost(topics, sizes[carries])
        return gas + self.per_parent_overhead * n_parents

    def max_parents_under_limit(self) -> int:
        """Largest parent count an empty addAsset can carry within the block limit."""
        headroom = self.block_gas_limit - self.estimate("addAsset")
        if headroom <= 0:
            return 0
        if self.per_parent_overhead == 0:
            raise ValueError("per_parent_overhead is zero; parent count is unbounded")
        return headroom // self.per_parent_overhead

    def to_usd_cents(self, gas: int) -> float:
        cents = Decimal(gas) * Decimal(repr(self.gas_price)) * Decimal(repr(self.eth_usd)) * 100
        return float(cents.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def estimate_gas(function: str, n_parents: int = 0, metadata_bytes: int = 0, data_bytes: int = 0,
                 schedule: GasSchedule | None = None) -> int:
    return (schedule or GasSchedule.default()).estimate(function, n_parents, metadata_bytes,
                                                         data_bytes)


def max_parents_under_limit(schedule: GasSchedule | None = None) -> int:
    return (schedule or GasSchedule.default()).max_parents_under_limit()


def gas_to_usd_cents(gas: int, schedule: GasSchedule | None = None) -> float:
    return (schedule or GasSchedule.default()).to_usd_cents(gas)
