"""Matrix CSV reading and writing.

Layout: a header row of column (observation) labels, then one row per
variable whose first cell is the variable label. Comma separated, ``.`` as
decimal point.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .exceptions import CsvParseError


def format_float(x) -> str:
    return repr(float(x))


def read_matrix_csv(path):
    """Return ``(values, row_labels, col_labels)``.

    Rows and columns in error messages are 1-based line / field numbers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise CsvParseError(f"{path}: need a header row and at least one data row")
    header = rows[0]
    width = len(header)
    if width < 2:
        raise CsvParseError(f"{path}: header needs a label column and data columns", row=1)
    col_labels = [h.strip() for h in header[1:]]
    row_labels = []
    values = np.empty((len(rows) - 1, width - 1))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise CsvParseError(f"{path}: expected {width} fields, got {len(row)}", row=i)
        row_labels.append(row[0].strip())
        for j, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise CsvParseError(f"{path}: non-numeric cell {cell!r}", row=i, column=j) from None
            if not np.isfinite(v):
                raise CsvParseError(f"{path}: non-finite cell {cell!r}", row=i, column=j)
            values[i - 2, j - 2] = v
    return values, row_labels, col_labels


def write_matrix_csv(path, values, row_labels=None, col_labels=None):
    values = np.asarray(values, dtype=float)
    N, n = values.shape
    row_labels = [f"v{i}" for i in range(N)] if row_labels is None else list(row_labels)
    col_labels = [f"o{j}" for j in range(n)] if col_labels is None else list(col_labels)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", *col_labels])
        for label, row in zip(row_labels, values):
            w.writerow([label, *(format_float(x) for x in row)])


def write_rows(path, header, rows):
    """Write a plain numeric/text table with a mandatory header row."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
