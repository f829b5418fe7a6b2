"""Tabular report rendering (plain table, CSV, JSON).

Every bundle carries an assumption block (precision, ports, batch, ...)
so no emitted number is ever separated from the settings that produced
it.  CSV output keeps a fixed column schema; assumptions ride along as
leading ``#`` comment lines.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Any, Optional

FORMATS = ("table", "csv", "json")


@dataclass
class ReportBundle:
    title: str
    assumptions: dict[str, Any]
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    totals: Optional[dict[str, Any]] = None
    notes: list[str] = field(default_factory=list)

    def add(self, **row) -> None:
        self.rows.append(row)

    def render(self, fmt: str = "table") -> str:
        if fmt == "table":
            return self._render_table()
        if fmt == "csv":
            return self._render_csv()
        if fmt == "json":
            return self._render_json()
        raise ValueError(f"unknown format {fmt!r} (choose from {', '.join(FORMATS)})")

    def _cells(self, row: dict[str, Any]) -> list[str]:
        return [_fmt(row.get(c, "")) for c in self.columns]

    def _render_table(self) -> str:
        out = io.StringIO()
        out.write(f"== {self.title} ==\n")
        out.write("assumptions: " + ", ".join(f"{k}={_fmt(v)}" for k, v in self.assumptions.items()) + "\n")
        grid = [self.columns] + [self._cells(r) for r in self.rows]
        if self.totals is not None:
            grid.append([_fmt(self.totals.get(c, "")) for c in self.columns])
        widths = [max(len(row[i]) for row in grid) for i in range(len(self.columns))]
        for n, row in enumerate(grid):
            out.write("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() + "\n")
            if n == 0:
                out.write("  ".join("-" * w for w in widths) + "\n")
        for note in self.notes:
            out.write(note + "\n")
        return out.getvalue()

    def _render_csv(self) -> str:
        out = io.StringIO()
        for k, v in self.assumptions.items():
            out.write(f"# {k}={_fmt(v)}\n")
        out.write(",".join(self.columns) + "\n")
        for row in self.rows:
            out.write(",".join(self._cells(row)) + "\n")
        return out.getvalue()

    def _render_json(self) -> str:
        doc = {
            "title": self.title,
            "assumptions": {k: _jsonable(v) for k, v in self.assumptions.items()},
            "columns": self.columns,
            "rows": [{k: _jsonable(v) for k, v in row.items()} for row in self.rows],
        }
        if self.totals is not None:
            doc["totals"] = {k: _jsonable(v) for k, v in self.totals.items()}
        if self.notes:
            doc["notes"] = self.notes
        return json.dumps(doc, indent=2) + "\n"


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)


def _jsonable(value: Any):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return str(value)
