"""
Pool verdicts per table cell and render interval tables.

Reports are a pure function of the pooled counts: ``Report.from_counts`` on the
``counts.json`` written next to a report reproduces the CSV and text bytes.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from ..taskgen.tasks import FAMILY_ORDER, FamilyKind
from .prompts import KNOCKOUT_VARIANTS
from .verdicts import VerdictRecord
from .wilson import Z_95, round_half_away, wilson

logger = logging.getLogger(__name__)

LENS_ROW = "VLM Judge Observation Rate"
SUBSET_ROWS = ("Text Tokens (All)", "Text Tokens (Padding Only)", "Text Tokens (Content Only)")

TABLE_ORDER = ("lens", "lens_subset", "knockout", "cross_patch", "reference_drop")
ROW_ORDER = {
    "lens": (LENS_ROW,),
    "lens_subset": SUBSET_ROWS,
    "knockout": KNOCKOUT_VARIANTS,
    "cross_patch": SUBSET_ROWS,
}
COLUMN_ORDER = tuple(kind.value for kind in FAMILY_ORDER)

CSV_FIELDS = ("table", "row", "column", "successes", "n", "p_bar", "delta_lo", "delta_hi", "cell")


def column_label(column: str) -> str:
    base, _, arm = column.partition(":")
    try:
        label = FamilyKind(base).label
    except ValueError:
        label = base
    return f"{label} ({arm})" if arm else label


@dataclass(frozen=True)
class PooledCell:
    table: str
    row: str
    column: str
    successes: int
    n: int

    def interval(self, z: float = Z_95):
        return wilson(self.successes, self.n, z)


def _ordered(values: Iterable[str], preferred: Iterable[str]) -> list[str]:
    values = list(dict.fromkeys(values))
    preferred = list(preferred)
    known = [v for v in preferred if v in values]
    return known + sorted(v for v in values if v not in preferred)


def _row_sort_key(row: str):
    # "cutoff 3" sorts numerically
    head, _, tail = row.rpartition(" ")
    return (head, int(tail)) if tail.isdigit() else (row, -1)


def pool(records: Iterable[VerdictRecord], split_arms: bool = True) -> list[PooledCell]:
    """Count passes per (table, row, column); style columns split by the arm recorded in each cell."""
    counts: dict[tuple[str, str, str], list[int]] = defaultdict(lambda: [0, 0])
    for record in records:
        column = record.cell.column
        if split_arms and record.cell.arm and column == FamilyKind.STYLE_TRANSFER.value:
            column = f"{column}:{record.cell.arm}"
        bucket = counts[(record.cell.table, record.cell.row, column)]
        bucket[0] += record.pass_flag
        bucket[1] += 1
    return [PooledCell(t, r, c, s, n) for (t, r, c), (s, n) in counts.items()]


class Report:
    def __init__(self, cells: Iterable[PooledCell], z: float = Z_95):
        self.z = z
        self.cells = {(c.table, c.row, c.column): c for c in cells}

    @classmethod
    def from_verdicts(cls, records: Iterable[VerdictRecord], split_arms: bool = True,
                      z: float = Z_95) -> "Report":
        return cls(pool(records, split_arms), z)

    @classmethod
    def from_counts(cls, payload: Mapping) -> "Report":
        return cls((PooledCell(**cell) for cell in payload["cells"]), payload.get("z", Z_95))

    def tables(self) -> list[str]:
        return _ordered((t for t, _, _ in self.cells), TABLE_ORDER)

    def rows(self, table: str) -> list[str]:
        rows = set(r for t, r, _ in self.cells if t == table)
        preferred = [r for r in ROW_ORDER.get(table, ()) if r in rows]
        return preferred + sorted(rows - set(preferred), key=_row_sort_key)

    def columns(self, table: str) -> list[str]:
        columns = list(dict.fromkeys(c for t, _, c in self.cells if t == table))
        preferred = [c for base in COLUMN_ORDER for c in [base] + sorted(x for x in columns if x.startswith(base + ":"))]
        return _ordered(columns, preferred)

    def ordered_cells(self) -> list[PooledCell]:
        return [
            self.cells[(table, row, column)]
            for table in self.tables()
            for row in self.rows(table)
            for column in self.columns(table)
            if (table, row, column) in self.cells
        ]

    # ----------------------------
    # Renderers
    # ----------------------------

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for cell in self.ordered_cells():
            interval = cell.interval(self.z)
            writer.writerow({
                "table": cell.table,
                "row": cell.row,
                "column": cell.column,
                "successes": cell.successes,
                "n": cell.n,
                "p_bar": round_half_away(interval.p_bar),
                "delta_lo": round_half_away(interval.delta_lo),
                "delta_hi": round_half_away(interval.delta_hi),
                "cell": interval.render(),
            })
        return buffer.getvalue()

    def to_text(self) -> str:
        lines = [f"VLM judge observation rates, Wilson {self.z:g} score intervals (passes/n)"]
        for table in self.tables():
            columns = self.columns(table)
            header = ["", *(column_label(c) for c in columns)]
            body = []
            for row in self.rows(table):
                entries = [row]
                for column in columns:
                    cell = self.cells.get((table, row, column))
                    entries.append(
                        f"{cell.interval(self.z).render()} ({cell.successes}/{cell.n})" if cell else "-"
                    )
                body.append(entries)
            widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
            lines.append("")
            lines.append(f"[{table}]")
            for entries in [header, *body]:
                lines.append(" | ".join(e.ljust(w) for e, w in zip(entries, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def counts(self) -> dict:
        return {
            "z": self.z,
            "cells": [
                {"table": c.table, "row": c.row, "column": c.column, "successes": c.successes, "n": c.n}
                for c in self.ordered_cells()
            ],
        }

    def write(self, out_dir: Path | str) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / "report.csv", "text": out / "report.txt", "counts": out / "counts.json"}
        paths["csv"].write_text(self.to_csv(), encoding="utf-8")
        paths["text"].write_text(self.to_text(), encoding="utf-8")
        paths["counts"].write_text(json.dumps(self.counts(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("wrote report", extra={"dir": str(out), "cells": len(self.cells)})
        return paths


def pool_and_report(records: Iterable[VerdictRecord], out_dir: Path | str | None = None,
                    split_arms: bool = True) -> Report:
    report = Report.from_verdicts(records, split_arms)
    if out_dir is not None:
        report.write(out_dir)
    return report
