"""Normalized relative error between estimate and truth ensembles.

For rectangular grids a, b over (path m, step n),

    error(a, b) = sum |a - b| / sum (|a| + |b|)

i.e. mean absolute deviation normalized by the mean total magnitude.
Returned as a fraction; tables report it as a percentage with two
decimals. Sums use exact (Shewchuk) compensated summation, so the result
is independent of grid flattening order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Ensemble:
    """A rectangular grid of values indexed by (path, step)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2 or values.size == 0:
            raise ValidationError("Ensemble requires a nonempty 2-D value grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "Ensemble":
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise ValidationError("Ensemble rows must share one length")
        return cls(np.array(rows, dtype=float))


def relative_error(a: Ensemble, b: Ensemble) -> float:
    """Normalized mean absolute deviation between two congruent grids."""
    va, vb = a.values, b.values
    if va.shape != vb.shape:
        raise ValidationError(
            f"ensembles are not congruent: {va.shape} vs {vb.shape}"
        )
    num = math.fsum(np.abs(va - vb).ravel())
    denom = math.fsum((np.abs(va) + np.abs(vb)).ravel())
    if denom == 0.0:
        raise ValidationError(
            "relative error is undefined: both ensembles are identically zero"
        )
    return num / denom


@dataclass
class ErrorTable:
    """A labeled grid of percent errors: one column per sweep value, one
    row per method (or per sweep level, for the hyperparameter table)."""

    columns: list[str]
    rows: list[tuple[str, list[float]]] = field(default_factory=list)
    row_header: str = "method"
    metadata: dict[str, str] = field(default_factory=dict)

    def add_row(self, label: str, percents: Sequence[float]) -> None:
        if not label:
            raise ValidationError("row label must be nonempty")
        values = [float(v) for v in percents]
        if len(values) != len(self.columns):
            raise ValidationError(
                f"row has {len(values)} entries for {len(self.columns)} columns"
            )
        self.rows.append((label, values))

    def row(self, label: str) -> list[float]:
        for name, values in self.rows:
            if name == label:
                return values
        raise KeyError(label)

    def to_csv_text(self) -> str:
        lines = [",".join([self.row_header] + self.columns)]
        for label, values in self.rows:
            lines.append(",".join([label] + ["%.2f" % v for v in values]))
        return "\n".join(lines) + "\n"

    def save_csv(self, file) -> None:
        FsPath(file).write_text(self.to_csv_text())

    def save_meta(self, file) -> None:
        lines = [f"{k} = {v}" for k, v in self.metadata.items()]
        FsPath(file).write_text("\n".join(lines) + "\n")


def sweep_errors(grid: Sequence[tuple[str, Ensemble, Ensemble]],
                 method: str = "error") -> ErrorTable:
    """Relative errors over a labeled sweep, as one percent row."""
    if len(grid) == 0:
        raise ValidationError("sweep grid must be nonempty")
    columns = []
    percents = []
    for label, a, b in grid:
        if not label:
            raise ValidationError("sweep labels must be nonempty")
        columns.append(label)
        percents.append(100.0 * relative_error(a, b))
    table = ErrorTable(columns=columns)
    table.add_row(method, percents)
    return table


def load_error_table_csv(file) -> ErrorTable:
    """Read back a table written by ErrorTable.save_csv."""
    with FsPath(file).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        table = ErrorTable(columns=header[1:], row_header=header[0])
        for row in reader:
            table.add_row(row[0], [float(v) for v in row[1:]])
    return table
