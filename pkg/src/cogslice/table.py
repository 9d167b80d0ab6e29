"""Column-oriented table used by every stage of the pipeline.

Numeric columns are float64 arrays where NaN is the missing marker. A small
set of identity columns (UE/gNB ids, scenario names) hold strings.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Mapping

import numpy as np

STRING_COLUMNS = frozenset({"ue_id", "gnb_id", "scenario", "slice_id"})


class TableError(ValueError):
    pass


def _as_column(name: str, values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise TableError(f"column {name!r} must be one-dimensional")
    if arr.dtype.kind in "biuf":
        return arr.astype(np.float64, copy=True)
    return np.array([str(v) for v in arr], dtype=object)


class DataTable:
    """Ordered mapping of column name to equal-length 1-D array."""

    def __init__(self, columns: Mapping[str, Iterable] | None = None):
        self._cols: dict[str, np.ndarray] = {}
        for name, values in (columns or {}).items():
            self._cols[name] = _as_column(name, values)
        lengths = {len(v) for v in self._cols.values()}
        if len(lengths) > 1:
            raise TableError(f"columns have unequal lengths: {sorted(lengths)}")

    @property
    def names(self) -> list[str]:
        return list(self._cols)

    @property
    def row_count(self) -> int:
        for v in self._cols.values():
            return len(v)
        return 0

    def __len__(self) -> int:
        return self.row_count

    def __contains__(self, name: str) -> bool:
        return name in self._cols

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._cols[name]
        except KeyError:
            raise KeyError(f"no column {name!r}") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataTable) or self.names != other.names:
            return False
        for name in self.names:
            a, b = self[name], other[name]
            if a.dtype == object or b.dtype == object:
                if a.dtype != b.dtype or list(a) != list(b):
                    return False
            elif not np.array_equal(a, b, equal_nan=True):
                return False
        return True

    def __repr__(self) -> str:
        return f"DataTable(rows={self.row_count}, columns={self.names})"

    def is_numeric(self, name: str) -> bool:
        return self[name].dtype != object

    def numeric_names(self) -> list[str]:
        return [n for n in self.names if self.is_numeric(n)]

    def copy(self) -> DataTable:
        return DataTable({n: v.copy() for n, v in self._cols.items()})

    def with_column(self, name: str, values, *, after: str | None = None) -> DataTable:
        col = _as_column(name, values)
        if self._cols and len(col) != self.row_count:
            raise TableError(f"column {name!r} has length {len(col)}, expected {self.row_count}")
        out: dict[str, np.ndarray] = {}
        for n, v in self._cols.items():
            if n == name:
                if after is None:
                    out[name] = col
                continue
            out[n] = v
            if n == after:
                out[name] = col
        if name not in out:
            out[name] = col
        t = DataTable()
        t._cols = out
        return t

    def drop(self, names: Iterable[str]) -> DataTable:
        gone = set(names)
        return DataTable({n: v for n, v in self._cols.items() if n not in gone})

    def select(self, names: Iterable[str]) -> DataTable:
        return DataTable({n: self[n] for n in names})

    def take(self, rows) -> DataTable:
        idx = np.asarray(rows)
        return DataTable({n: v[idx] for n, v in self._cols.items()})

    def matrix(self, names: Iterable[str]) -> np.ndarray:
        names = list(names)
        if not names:
            return np.empty((self.row_count, 0))
        return np.column_stack([self[n] for n in names]).astype(np.float64)

    @staticmethod
    def concat(tables: list[DataTable]) -> DataTable:
        if not tables:
            return DataTable()
        names = tables[0].names
        for t in tables[1:]:
            if t.names != names:
                raise TableError("cannot concatenate tables with different columns")
        return DataTable({n: np.concatenate([t[n] for t in tables]) for n in names})

    # -- serialization -------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        cols = [self[n] for n in self.names]
        for i in range(self.row_count):
            w.writerow([_fmt_cell(c[i]) for c in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> DataTable:
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            return cls()
        raw: list[list[str]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TableError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            for j, cell in enumerate(row):
                raw[j].append(cell)
        cols = {}
        for name, cells in zip(header, raw):
            if name in STRING_COLUMNS:
                cols[name] = np.array(cells, dtype=object)
                continue
            try:
                cols[name] = np.array([float(c) if c != "" else math.nan for c in cells])
            except ValueError:
                cols[name] = np.array(cells, dtype=object)
        return cls(cols)


def _fmt_cell(v) -> str:
    if isinstance(v, str):
        return v
    f = float(v)
    if math.isnan(f):
        return ""
    if f.is_integer() and abs(f) < 2**53:
        return str(int(f))
    return repr(f)
