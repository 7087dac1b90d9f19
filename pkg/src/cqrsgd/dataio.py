"""CSV ingestion, deterministic splitting, and feature standardization.

The loader expects a comma-separated UTF-8 file with a header row,
``.`` decimal separators, and unquoted numerics. Feature columns are
typed continuous, boolean, or categorical; booleans map to {0, 1} and
each categorical column expands to one-hot indicator columns (one per
observed level, levels ordered lexicographically for reproducibility).
Encoded columns keep the schema's feature order with one-hot blocks
appended after the plain features.

Splitting shuffles once with the seed and slices contiguously, so equal
seeds give identical, pairwise-disjoint parts. Sizes are floor(fraction
* N) for the test, calibration, and intentionally-unused shares; the
training part absorbs every remaining row.

Standardization fits a per-feature affine map (mean 0, unit variance) on
the training split only and applies the identical map everywhere else,
so no statistics leak from calibration or test data. Zero-variance
features map to exactly 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset

__all__ = [
    "SchemaError",
    "RowError",
    "ColumnSpec",
    "TabularSchema",
    "load_csv",
    "save_csv",
    "split",
    "Scaler",
    "standardize",
    "COLUMN_KINDS",
]

COLUMN_KINDS = ("continuous", "boolean", "categorical")

_BOOL_VALUES = {
    "0": 0.0,
    "1": 1.0,
    "false": 0.0,
    "true": 1.0,
}


class SchemaError(ValueError):
    """The file header does not provide the columns the schema requires."""


class RowError(ValueError):
    """A data cell could not be parsed; carries the 1-based file line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValueError(f"column kind must be one of {COLUMN_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class TabularSchema:
    """Feature columns (with kinds) plus the label column name."""

    features: tuple[ColumnSpec, ...]
    label: str

    def __post_init__(self):
        if not self.features:
            raise ValueError("schema needs at least one feature column")
        names = [c.name for c in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature column names must be unique")
        if self.label in names:
            raise ValueError("label column must be distinct from the features")
        object.__setattr__(self, "features", tuple(self.features))

    @classmethod
    def continuous(cls, feature_names, label: str) -> "TabularSchema":
        return cls(tuple(ColumnSpec(n, "continuous") for n in feature_names), label)


def _parse_float(cell: str, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise RowError(line, f"column {column!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise RowError(line, f"column {column!r}: non-finite value {cell!r}")
    return value


def _parse_bool(cell: str, line: int, column: str) -> float:
    try:
        return _BOOL_VALUES[cell.strip().lower()]
    except KeyError:
        raise RowError(
            line, f"column {column!r}: expected a boolean (0/1/true/false), got {cell!r}"
        ) from None


def load_csv(path, schema: TabularSchema) -> Dataset:
    """Parse a CSV file into a Dataset, encoding features per the schema."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        positions = {}
        for col in [*(c.name for c in schema.features), schema.label]:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
            positions[col] = header.index(col)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise RowError(line_no, f"expected {len(header)} cells, got {len(row)}")
            rows.append((line_no, row))
    if not rows:
        raise ValueError(f"{path}: no data rows")

    # Lexicographic level order per categorical column, fixed before encoding.
    levels: dict[str, list[str]] = {}
    for col in schema.features:
        if col.kind == "categorical":
            seen = {row[positions[col.name]].strip() for _, row in rows}
            levels[col.name] = sorted(seen)

    plain = [c for c in schema.features if c.kind != "categorical"]
    categorical = [c for c in schema.features if c.kind == "categorical"]
    d = len(plain) + sum(len(levels[c.name]) for c in categorical)
    x = np.zeros((len(rows), d))
    y = np.zeros(len(rows))
    for i, (line_no, row) in enumerate(rows):
        j = 0
        for col in plain:
            cell = row[positions[col.name]]
            if col.kind == "continuous":
                x[i, j] = _parse_float(cell, line_no, col.name)
            else:
                x[i, j] = _parse_bool(cell, line_no, col.name)
            j += 1
        for col in categorical:
            level = row[positions[col.name]].strip()
            x[i, j + levels[col.name].index(level)] = 1.0
            j += len(levels[col.name])
        y[i] = _parse_float(row[positions[schema.label]], line_no, schema.label)
    return Dataset(x, y)


def save_csv(data: Dataset, path, feature_names=None, label: str = "y") -> None:
    """Write a Dataset in the loader's format (header + numeric cells)."""
    if feature_names is None:
        feature_names = [f"x{i + 1}" for i in range(data.d)]
    if len(feature_names) != data.d:
        raise ValueError("need one feature name per column")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*feature_names, label])
        for i in range(len(data)):
            writer.writerow([repr(float(v)) for v in data.x[i]] + [repr(float(data.y[i]))])


def split(data: Dataset, fractions: tuple[float, float, float], seed) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle once and slice into (train, cal, test) parts.

    ``fractions`` is (test, train, cal). Test, calibration, and the
    intentionally-unused share (1 - sum of fractions) get floor(fraction
    * N) rows; the training part absorbs all remaining rows, so rounding
    slack goes to the largest consumer.
    """
    f_test, f_train, f_cal = (float(f) for f in fractions)
    if min(f_test, f_train, f_cal) <= 0:
        raise ValueError("all three fractions must be positive")
    total = f_test + f_train + f_cal
    if total > 1.0 + 1e-12:
        raise ValueError(f"fractions sum to {total}, which exceeds 1")
    n = len(data)
    n_test = math.floor(f_test * n)
    n_cal = math.floor(f_cal * n)
    n_unused = math.floor(max(0.0, 1.0 - total) * n)
    n_train = n - n_test - n_cal - n_unused
    if n_train < 0:
        raise ValueError("fractions leave no rows for training")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test = data.subset(perm[:n_test])
    cal = data.subset(perm[n_test : n_test + n_cal])
    train = data.subset(perm[n_test + n_cal : n_test + n_cal + n_train])
    return train, cal, test


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine map fitted on a training split."""

    mean: np.ndarray
    scale: np.ndarray
    zero_variance: np.ndarray

    def __post_init__(self):
        for name in ("mean", "scale", "zero_variance"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def transform(self, data: Dataset) -> Dataset:
        out = (data.x - self.mean) / self.scale
        if self.zero_variance.any():
            out = out.copy()
            out[:, self.zero_variance] = 0.0
        return Dataset(out, data.y)

    def inverse(self, data: Dataset) -> Dataset:
        return Dataset(data.x * self.scale + self.mean, data.y)


def standardize(train: Dataset, *others: Dataset) -> tuple:
    """Fit mean/variance on ``train`` only; apply to all given datasets.

    Returns the scaled datasets in argument order followed by the fitted
    :class:`Scaler`. Labels are left untouched. Zero-variance features
    (no information) map to exactly 0 and invert back to their mean.
    """
    if len(train) == 0:
        raise ValueError("cannot fit a scaler on an empty training split")
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    zero = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(zero, 1.0, std)
    scaler = Scaler(mean=mean, scale=scale, zero_variance=zero)
    scaled = [scaler.transform(ds) for ds in (train, *others)]
    return (*scaled, scaler)
