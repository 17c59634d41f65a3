"""CSV ingestion and the column-major typed table used by the detector.

Categorical columns are integer-coded against a dictionary of raw cell
strings (first-appearance order); numerical columns hold finite float64
values. A :class:`Dataset` is immutable once built.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Categorical",
    "Numerical",
    "ColumnKind",
    "Column",
    "Dataset",
    "DatasetError",
    "SchemaConfig",
    "RawTable",
    "read_raw_table",
    "build_dataset",
    "load_csv",
    "infer_column_kind",
    "split_features",
]


class DatasetError(ValueError):
    """Raised for malformed input data (parse errors, bad shapes, constant columns)."""


@dataclass(frozen=True)
class Categorical:
    cardinality: int

    def __post_init__(self) -> None:
        if self.cardinality < 2:
            raise DatasetError(f"categorical cardinality must be >= 2, got {self.cardinality}")

    def __str__(self) -> str:
        return f"categorical({self.cardinality})"


@dataclass(frozen=True)
class Numerical:
    def __str__(self) -> str:
        return "numerical"


ColumnKind = Union[Categorical, Numerical]

_KIND_NAMES = ("categorical", "numerical")


@dataclass(frozen=True)
class SchemaConfig:
    """How raw CSV columns become typed columns.

    Attributes:
        categorical_ratio_threshold: A numeric, integer-valued column is
            categorical when its distinct count is strictly below this
            fraction of the row count.
        overrides: Column name to ``"categorical"`` or ``"numerical"``.
        missing_value_policy: ``"reject"`` raises on an empty cell,
            ``"drop_rows"`` silently drops rows with any empty cell.
    """

    categorical_ratio_threshold: float = 0.05
    overrides: Mapping[str, str] = field(default_factory=dict)
    missing_value_policy: str = "reject"

    def __post_init__(self) -> None:
        if not 0.0 < self.categorical_ratio_threshold <= 1.0:
            raise ValueError(
                f"categorical_ratio_threshold must be in (0, 1], got {self.categorical_ratio_threshold}"
            )
        if self.missing_value_policy not in ("reject", "drop_rows"):
            raise ValueError(f"unknown missing_value_policy {self.missing_value_policy!r}")
        for name, kind in self.overrides.items():
            if kind not in _KIND_NAMES:
                raise ValueError(f"override for column {name!r} must be one of {_KIND_NAMES}, got {kind!r}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    data: np.ndarray
    dictionary: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.kind, Categorical):
            data = np.asarray(self.data, dtype=np.int64)
            if self.dictionary is None or len(self.dictionary) != self.kind.cardinality:
                raise DatasetError(f"column {self.name!r}: dictionary must have {self.kind.cardinality} entries")
            if len(set(self.dictionary)) != len(self.dictionary):
                raise DatasetError(f"column {self.name!r}: dictionary entries must be distinct")
            if data.size and (data.min() < 0 or data.max() >= self.kind.cardinality):
                raise DatasetError(f"column {self.name!r}: codes out of range [0, {self.kind.cardinality})")
        else:
            data = np.asarray(self.data, dtype=np.float64)
            if self.dictionary is not None:
                raise DatasetError(f"column {self.name!r}: numerical columns carry no dictionary")
            if not np.all(np.isfinite(data)):
                raise DatasetError(f"column {self.name!r}: numerical values must be finite")
        if data.ndim != 1:
            raise DatasetError(f"column {self.name!r}: data must be one-dimensional")
        if data is self.data:
            data = data.copy()
        object.__setattr__(self, "data", _readonly(data))

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.kind, Categorical)

    def __len__(self) -> int:
        return len(self.data)

    def decode(self) -> list[str]:
        """Raw cell strings for a categorical column."""
        if self.dictionary is None:
            raise TypeError(f"column {self.name!r} is numerical")
        return [self.dictionary[c] for c in self.data]

    def take(self, rows: np.ndarray) -> Column:
        return Column(self.name, self.kind, self.data[rows], self.dictionary)


@dataclass(frozen=True)
class Dataset:
    """N rows by K typed columns.

    ``row_ids`` maps each row back to its 0-based data-row index in the
    source file, which differs from ``range(N)`` once rows are dropped or
    filtered.
    """

    columns: tuple[Column, ...]
    row_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        columns = tuple(self.columns)
        if len(columns) < 2:
            raise DatasetError(f"a dataset needs at least 2 columns, got {len(columns)}")
        lengths = {len(c) for c in columns}
        if len(lengths) != 1:
            raise DatasetError(f"columns have unequal lengths: {sorted(lengths)}")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate column names in {names}")
        n = lengths.pop()
        row_ids = np.arange(n, dtype=np.int64) if self.row_ids is None else np.array(self.row_ids, dtype=np.int64)
        if row_ids.shape != (n,):
            raise DatasetError(f"row_ids must have length {n}")
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "row_ids", _readonly(row_ids))

    @property
    def n_rows(self) -> int:
        return len(self.columns[0])

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @cached_property
    def matrix(self) -> np.ndarray:
        """(N, K) float64 view of every column; categorical columns as their codes."""
        m = np.column_stack([c.data.astype(np.float64) for c in self.columns])
        return _readonly(np.ascontiguousarray(m))

    def take(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        """Row subset, keeping column kinds and dictionaries unchanged."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(tuple(c.take(rows) for c in self.columns), self.row_ids[rows])


def infer_column_kind(
    distinct_count: int,
    n_rows: int,
    threshold: float = 0.05,
    *,
    numeric: bool = True,
    integer_valued: bool = True,
) -> ColumnKind:
    """Decide categorical vs numerical for one column.

    Non-numeric columns are always categorical. A numeric column is
    categorical only when it is integer-valued and
    ``distinct_count < threshold * n_rows``.
    """
    if distinct_count < 1 or distinct_count > n_rows:
        raise ValueError(f"distinct_count must be in [1, n_rows], got {distinct_count} for {n_rows} rows")
    if distinct_count == 1:
        raise DatasetError("constant column")
    if not numeric:
        return Categorical(distinct_count)
    if integer_valued and distinct_count < threshold * n_rows:
        return Categorical(distinct_count)
    return Numerical()


def split_features(dataset: Dataset, k: int) -> tuple[Column, list[Column]]:
    """Return column ``k`` and the remaining columns in their original order."""
    if not 0 <= k < dataset.n_columns:
        raise IndexError(f"column index {k} out of range for {dataset.n_columns} columns")
    return dataset.columns[k], [c for j, c in enumerate(dataset.columns) if j != k]


@dataclass(frozen=True)
class RawTable:
    """Header and cell text exactly as read, with 1-based file line numbers per record."""

    header: list[str]
    rows: list[list[str]]
    line_numbers: list[int]


def read_raw_table(path: str | Path) -> RawTable:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        rows: list[list[str]] = []
        lines: list[int] = []
        for record in reader:
            if not record or (len(record) == 1 and not record[0].strip() and len(header) > 1):
                continue  # blank line
            if len(record) != len(header):
                raise DatasetError(
                    f"{path}: line {reader.line_num}: expected {len(header)} cells, got {len(record)}"
                )
            rows.append(record)
            lines.append(reader.line_num)
    return RawTable(header, rows, lines)


def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def build_dataset(
    table: RawTable,
    schema: SchemaConfig | None = None,
    *,
    exclude: Sequence[str] = (),
    source: str = "<table>",
) -> Dataset:
    """Type and encode a raw table. Columns named in ``exclude`` are skipped."""
    schema = schema or SchemaConfig()
    for name in exclude:
        if name not in table.header:
            raise DatasetError(f"{source}: no column named {name!r}")
    unknown = set(schema.overrides) - set(table.header)
    if unknown:
        raise DatasetError(f"{source}: overrides name unknown columns {sorted(unknown)}")
    if len(set(table.header)) != len(table.header):
        raise DatasetError(f"{source}: duplicate header names")

    keep_rows = []
    for r, (record, line) in enumerate(zip(table.rows, table.line_numbers)):
        missing = [name for name, cell in zip(table.header, record) if not cell.strip()]
        if missing:
            if schema.missing_value_policy == "reject":
                raise DatasetError(
                    f"{source}: line {line} (data row {r}): missing value in column {missing[0]!r}"
                )
            continue
        keep_rows.append(r)
    if not keep_rows:
        raise DatasetError(f"{source}: no data rows")

    n = len(keep_rows)
    columns = []
    for j, name in enumerate(table.header):
        if name in exclude:
            continue
        cells = [table.rows[r][j].strip() for r in keep_rows]
        columns.append(_build_column(name, cells, schema, [table.line_numbers[r] for r in keep_rows], source))
    return Dataset(tuple(columns), np.asarray(keep_rows, dtype=np.int64))


def _build_column(name: str, cells: list[str], schema: SchemaConfig, lines: list[int], source: str) -> Column:
    n = len(cells)
    parsed = [_parse_float(c) for c in cells]
    numeric = all(v is not None for v in parsed)
    override = schema.overrides.get(name)

    if override == "numerical" or (override is None and numeric):
        if not numeric:
            bad = next(i for i, v in enumerate(parsed) if v is None)
            raise DatasetError(f"{source}: line {lines[bad]}: cannot parse {cells[bad]!r} in column {name!r} as a number")
        values = np.array(parsed, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DatasetError(f"{source}: line {lines[bad]}: non-finite value {cells[bad]!r} in column {name!r}")

    dictionary: dict[str, int] = {}
    codes = np.empty(n, dtype=np.int64)
    for i, c in enumerate(cells):
        codes[i] = dictionary.setdefault(c, len(dictionary))
    distinct = len(dictionary)

    if override == "numerical":
        # a forced-numerical constant column is accepted; its feature score degenerates to 0
        return Column(name, Numerical(), values)
    if override == "categorical":
        if distinct < 2:
            raise DatasetError(f"{source}: column {name!r} is a constant column")
        return Column(name, Categorical(distinct), codes, tuple(dictionary))

    integer_valued = numeric and all(float(v).is_integer() for v in values)
    try:
        kind = infer_column_kind(
            distinct, n, schema.categorical_ratio_threshold, numeric=numeric, integer_valued=integer_valued
        )
    except DatasetError:
        raise DatasetError(
            f"{source}: column {name!r} is a constant column; drop it or override its kind"
        ) from None
    if isinstance(kind, Categorical):
        return Column(name, kind, codes, tuple(dictionary))
    return Column(name, kind, values)


def load_csv(path: str | Path, schema: SchemaConfig | None = None, *, exclude: Sequence[str] = ()) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`."""
    return build_dataset(read_raw_table(path), schema, exclude=exclude, source=str(path))


def ceil_fraction(fraction: float, n: int) -> int:
    """``ceil(fraction * n)`` without float noise pushing exact products up by one."""
    return int(math.ceil(round(fraction * n, 9)))
