"""Columnar dataset container and the CSV schema used by every estimator.

A dataset is a bag of equal-length float columns addressed by name.  Column
names carry the roles: ``y`` outcome, ``d`` treatment, ``t`` time (0/1 in the
two-period designs, integer periods in panels), ``cohort`` first treated
period with ``inf`` for never treated, ``z`` running variable, ``unit`` panel
identifier, ``x1..xk`` frontier inputs, ``w1..wm`` instruments.

CSV files must have a header row naming the columns.  All cells are numeric;
a ``cohort`` cell may be empty or the literal ``inf`` for never-treated
units.  Writing uses shortest round-trip float formatting so that a
write/read cycle reproduces the arrays bit for bit.
"""

from __future__ import annotations

import csv
import re
from typing import Iterable, Mapping

import numpy as np

from .errors import SchemaError

_X_PATTERN = re.compile(r"^x(\d+)$")
_W_PATTERN = re.compile(r"^w(\d+)$")


class Dataset:
    """Immutable collection of named float columns of equal length."""

    def __init__(self, columns: Mapping[str, np.ndarray]):
        if not columns:
            raise SchemaError("dataset must have at least one column")
        cols: dict[str, np.ndarray] = {}
        n = None
        for name, values in columns.items():
            if not isinstance(name, str) or not name:
                raise SchemaError("column names must be non-empty strings")
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise SchemaError(f"column {name!r} must be one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise SchemaError(
                    f"column {name!r} has length {arr.shape[0]}, expected {n}"
                )
            bad = ~np.isfinite(arr)
            if name == "cohort":
                bad &= ~np.isposinf(arr)  # inf marks never-treated units
            if bad.any():
                raise SchemaError(f"column {name!r} contains non-finite values")
            arr = arr.copy()
            arr.flags.writeable = False
            cols[name] = arr
        self._columns = cols
        self._n = int(n)

    @property
    def n(self) -> int:
        return self._n

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._columns)

    def has(self, name: str) -> bool:
        return name in self._columns

    def col(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"required column {name!r} is missing") from None

    def require(self, *names: str) -> None:
        missing = [name for name in names if name not in self._columns]
        if missing:
            raise SchemaError(f"required columns missing: {', '.join(missing)}")

    def input_cols(self) -> tuple[str, ...]:
        """Frontier input columns x1..xk, in index order."""
        return self._ordered(_X_PATTERN)

    def instrument_cols(self) -> tuple[str, ...]:
        """Instrument columns w1..wm, in index order."""
        return self._ordered(_W_PATTERN)

    def _ordered(self, pattern: re.Pattern) -> tuple[str, ...]:
        hits = []
        for name in self._columns:
            m = pattern.match(name)
            if m:
                hits.append((int(m.group(1)), name))
        return tuple(name for _, name in sorted(hits))

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        if mask.dtype == bool:
            if mask.shape != (self._n,):
                raise SchemaError("boolean mask length does not match the dataset")
        return Dataset({name: arr[mask] for name, arr in self._columns.items()})

    def with_columns(self, extra: Mapping[str, np.ndarray]) -> "Dataset":
        merged = dict(self._columns)
        merged.update(extra)
        return Dataset(merged)

    def canonical_order(self) -> "Dataset":
        """Rows sorted lexicographically by column values.

        Estimates never depend on row order mathematically; reducing rows in
        this canonical order makes them bit-identical under permutation too.
        """
        names = sorted(self._columns)
        keys = tuple(self._columns[name] for name in reversed(names))
        idx = np.lexsort(keys)
        return self.subset(idx)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError("CSV file is empty; a header row is required") from None
            header = [name.strip() for name in header]
            if any(not name for name in header):
                raise SchemaError("CSV header has an empty column name")
            if len(set(header)) != len(header):
                raise SchemaError("CSV header has duplicate column names")
            raw: list[list[float]] = [[] for _ in header]
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise SchemaError(
                        f"CSV row {line_no} has {len(row)} cells, expected {len(header)}"
                    )
                for j, cell in enumerate(row):
                    cell = cell.strip()
                    if cell == "":
                        if header[j] == "cohort":
                            raw[j].append(np.inf)  # empty cohort cell = never treated
                            continue
                        raise SchemaError(f"empty cell in column {header[j]!r}, row {line_no}")
                    try:
                        raw[j].append(float(cell))
                    except ValueError:
                        raise SchemaError(
                            f"non-numeric cell {cell!r} in column {header[j]!r}, row {line_no}"
                        ) from None
        return cls({name: np.asarray(raw[j]) for j, name in enumerate(header)})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.names)
            cols = [self._columns[name] for name in self.names]
            for i in range(self._n):
                writer.writerow([repr(float(c[i])) for c in cols])


def design_matrix(data: Dataset, cols: Iterable[str], intercept: bool = True) -> np.ndarray:
    """Stack the named columns (plus an optional leading intercept) as a matrix."""
    parts = []
    if intercept:
        parts.append(np.ones(data.n))
    for name in cols:
        parts.append(data.col(name))
    return np.column_stack(parts) if parts else np.empty((data.n, 0))
