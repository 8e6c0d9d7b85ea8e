"""CSV input handling: header checks and typed column access.

Inputs are the result tables written by the simulation package (UTF-8,
one header row, floats at 17 significant digits). They are read as-is and
never modified; every complaint names the offending column and row.
"""

from __future__ import annotations

import ast
import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataError, SchemaError


@dataclass
class Table:
    """One parsed CSV file: raw string cells keyed by column name."""

    path: str
    role: str
    header: list
    cells: dict

    @property
    def n_rows(self) -> int:
        if not self.header:
            return 0
        return len(self.cells[self.header[0]])

    def _raw(self, name):
        if name not in self.cells:
            raise SchemaError(
                f"input '{self.role}' ({self.path}): no column named "
                f"'{name}'; found {self.header}")
        return self.cells[name]

    def column(self, name) -> np.ndarray:
        """One column as a float array; 'nan' cells pass through as NaN."""
        raw = self._raw(name)
        out = np.empty(len(raw), dtype=float)
        for i, cell in enumerate(raw):
            try:
                out[i] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"input '{self.role}' ({self.path}): column '{name}', "
                    f"row {i + 2}: cannot parse {cell!r} as a number"
                ) from None
        return out

    def text_column(self, name) -> list:
        """One column as raw strings (for labels such as the law kind)."""
        return list(self._raw(name))

    def site_column(self, name) -> list:
        """Integer lattice sites parsed from cells like '(3,)' or '(1, 2)'."""
        raw = self._raw(name)
        sites = []
        for i, cell in enumerate(raw):
            try:
                site = ast.literal_eval(cell)
            except (ValueError, SyntaxError):
                site = None
            if (not isinstance(site, tuple) or not site
                    or not all(isinstance(v, int) for v in site)):
                raise SchemaError(
                    f"input '{self.role}' ({self.path}): column '{name}', "
                    f"row {i + 2}: cannot parse {cell!r} as a lattice site")
            sites.append(site)
        dims = {len(s) for s in sites}
        if len(dims) > 1:
            raise SchemaError(
                f"input '{self.role}' ({self.path}): column '{name}' mixes "
                f"site dimensions {sorted(dims)}")
        return sites

    def require(self, columns) -> None:
        """Fail with a column-level message unless every name is present."""
        missing = [c for c in columns if c not in self.cells]
        if missing:
            raise SchemaError(
                f"input '{self.role}' ({self.path}): missing required "
                f"column(s) {missing}; found {self.header}")


def read_table(path, role="data") -> Table:
    """Parse one CSV file; empty tables are rejected before any rendering."""
    if not os.path.isfile(path):
        raise SchemaError(f"input '{role}': no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or not rows[0]:
        raise SchemaError(f"input '{role}' ({path}): no header row")
    header = rows[0]
    if len(set(header)) != len(header):
        raise SchemaError(
            f"input '{role}' ({path}): duplicate column names in {header}")
    body = rows[1:]
    if not body:
        raise EmptyDataError(f"input '{role}' ({path}): no data rows")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise SchemaError(
                f"input '{role}' ({path}): row {i + 2} has {len(row)} "
                f"cells, header has {len(header)}")
    cells = {name: [row[j] for row in body] for j, name in enumerate(header)}
    return Table(path=path, role=role, header=list(header), cells=cells)
