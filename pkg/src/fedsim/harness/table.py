"""Grouped summary tables (median with min/max across seeds)."""

from __future__ import annotations

import dataclasses
import math
import os
import statistics

from ..errors import ConfigError
from .runner import format_value, write_csv


@dataclasses.dataclass
class Table:
    columns: list[str]
    rows: list[dict]
    excluded: int = 0

    def to_text(self) -> str:
        cells = [[format_cell(r[c]) for c in self.columns] for r in self.rows]
        widths = [max(len(c), *(len(row[j]) for row in cells)) for j, c in enumerate(self.columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(self.columns, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
        if self.excluded:
            lines.append(f"# {self.excluded} diverged row(s) excluded")
        return "\n".join(lines) + "\n"

    def write(self, prefix) -> tuple[str, str]:
        """Write ``<prefix>.csv`` and ``<prefix>.txt``; returns both paths."""
        csv_path, txt_path = f"{prefix}.csv", f"{prefix}.txt"
        write_csv(csv_path, self.columns, self.rows)
        if self.excluded:
            with open(csv_path, "a", encoding="utf-8") as fh:
                fh.write(f"# {self.excluded} diverged row(s) excluded\n")
        os.makedirs(os.path.dirname(os.path.abspath(txt_path)), exist_ok=True)
        with open(txt_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        return csv_path, txt_path


def format_cell(value) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return format_value(value)


def _metric_value(row, metric):
    value = row[metric]
    # a run that never hit its target took "more than R" rounds
    if value is None:
        return math.inf
    return float(value)


def emit_table(rows, group_by, metric: str, out_prefix=None) -> Table:
    """Median/min/max of ``metric`` for each distinct ``group_by`` tuple.

    Diverged rows are dropped and counted. Groups appear in first-seen order.
    """
    rows = list(rows)
    if not rows:
        raise ConfigError("no rows to tabulate", "rows")
    group_by = list(group_by)
    for field in [*group_by, metric]:
        if field not in rows[0]:
            raise ConfigError("unknown field", field)
    kept = [r for r in rows if not r.get("diverged")]
    groups: dict = {}
    for row in kept:
        groups.setdefault(tuple(row[g] for g in group_by), []).append(_metric_value(row, metric))
    out = []
    for key, values in groups.items():
        entry = dict(zip(group_by, key))
        entry.update(median=statistics.median(values), min=min(values), max=max(values), n=len(values))
        out.append(entry)
    table = Table([*group_by, "median", "min", "max", "n"], out, excluded=len(rows) - len(kept))
    if out_prefix:
        table.write(out_prefix)
    return table
