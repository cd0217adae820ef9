"""Gas reports over a chain: per-action rows, text/CSV/JSON output and a bar chart."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .gas import GasSchedule
from .ledger import Ledger


def labels_path(chain: str | os.PathLike) -> Path:
    chain = Path(chain)
    return chain.with_name(chain.name + ".labels.json")


def save_labels(chain: str | os.PathLike, labels: dict[int, str]) -> None:
    doc = {str(block): label for block, label in sorted(labels.items())}
    labels_path(chain).write_text(json.dumps(doc, indent=2) + "\n")


def load_labels(chain: str | os.PathLike) -> dict[int, str]:
    path = labels_path(chain)
    if not path.exists():
        return {}
    return {int(k): v for k, v in json.loads(path.read_text()).items()}


@dataclass(frozen=True)
class GasRow:
    label: str
    gas: int
    cents: float
    blocks: tuple[int, ...]


@dataclass(frozen=True)
class GasReport:
    rows: tuple[GasRow, ...]
    total_gas: int
    total_cents: float

    @property
    def total_usd(self) -> float:
        return self.total_cents / 100

    def to_text(self) -> str:
        width = max([len(r.label) for r in self.rows] + [len("Total")])
        lines = [f"{'Action':<{width}}  {'Gas':>10}  {'Cents':>7}", "-" * (width + 21)]
        for r in self.rows:
            lines.append(f"{r.label:<{width}}  {r.gas:>10,}  {r.cents:>7.1f}")
        lines.append("-" * (width + 21))
        lines.append(f"{'Total':<{width}}  {self.total_gas:>10,}  {self.total_cents:>7.1f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["action", "gas", "usd_cents", "blocks"])
        for r in self.rows:
            writer.writerow([r.label, r.gas, f"{r.cents:.1f}", " ".join(map(str, r.blocks))])
        writer.writerow(["Total", self.total_gas, f"{self.total_cents:.1f}", ""])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"rows": [{"action": r.label, "gas": r.gas, "usd_cents": r.cents,
                         "blocks": list(r.blocks)} for r in self.rows],
               "total_gas": self.total_gas, "total_usd_cents": self.total_cents}
        return json.dumps(doc, indent=2) + "\n"

    def plot(self, path: str | os.PathLike) -> Path:
        """Horizontal bar chart of gas per action, saved as an image."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(9, 0.45 * len(self.rows) + 1.5))
        labels = [r.label for r in self.rows][::-1]
        gas = [r.gas for r in self.rows][::-1]
        bars = ax.barh(labels, gas, color="#4c72b0")
        for bar, row in zip(bars, self.rows[::-1]):
            ax.text(bar.get_width(), bar.get_y() + bar.get_height() / 2,
                    f" {row.gas:,} ({row.cents:.1f}¢)", va="center", fontsize=8)
        ax.set_xlabel("gas used")
        ax.set_title(f"Gas per action, total {self.total_gas:,} gas = {self.total_usd:.2f} USD")
        ax.set_xlim(0, max(gas, default=1) * 1.3)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return path


def gas_report(ledger: Ledger, labels: dict[int, str] | None = None,
               schedule: GasSchedule | None = None) -> GasReport:
    """One row per labelled action (consecutive blocks sharing a label), in chain order.

    Unlabelled transactions get a row each, named after the call.
    """
    schedule = schedule or ledger.schedule
    labels = labels or {}
    grouped: list[tuple[str, list[int], int]] = []
    for block in ledger.blocks[1:]:
        tx, receipt = block.transactions[0], block.receipts[0]
        label = labels.get(block.number)
        if label is None:
            label = f"{tx.function} by {tx.sender.short()}"
            if not receipt.ok:
                label += f" (reverted: {receipt.reason})"
            grouped.append((label, [block.number], receipt.gas_used))
        elif grouped and grouped[-1][0] == label and grouped[-1][1][-1] == block.number - 1:
            name, blocks, gas = grouped[-1]
            grouped[-1] = (name, blocks + [block.number], gas + receipt.gas_used)
        else:
            grouped.append((label, [block.number], receipt.gas_used))
    rows = tuple(GasRow(label, gas, schedule.to_usd_cents(gas), tuple(blocks))
                 for label, blocks, gas in grouped)
    total = sum(r.gas for r in rows)
    return GasReport(rows, total, schedule.to_usd_cents(total))
