"""Data model for partially observed datasets.

A dataset is a numeric matrix paired with a boolean missingness mask.  The
mask is the single source of truth: a cell value is only meaningful where the
mask is False.  Internally missing cells hold NaN, but no algorithm in this
package is allowed to test for NaN -- everything consults the mask, which
keeps integer-coded categorical columns representable and makes masked cells
freely fuzzable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ColumnKind",
    "MaskedMatrix",
    "Pattern",
    "TargetVector",
    "masked_dot",
    "read_csv",
    "write_csv",
    "unique_patterns",
]

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnKind:
    """Per-column type tag: continuous, or categorical with labelled levels."""

    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == CONTINUOUS and self.levels:
            raise ValueError("continuous columns carry no levels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


def continuous() -> ColumnKind:
    return ColumnKind(CONTINUOUS)


def categorical(levels) -> ColumnKind:
    return ColumnKind(CATEGORICAL, tuple(str(v) for v in levels))


@dataclass(frozen=True)
class Pattern:
    """One row's missingness pattern; hashable so it can key partitions."""

    bits: tuple[bool, ...]

    @property
    def count_missing(self) -> int:
        return sum(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    @staticmethod
    def from_row(row) -> "Pattern":
        return Pattern(tuple(bool(b) for b in row))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=bool)


class MaskedMatrix:
    """An n x d numeric matrix with a parallel boolean mask (True = missing).

    Instances are immutable after construction and safe to share between
    workers.  ``values[i, j]`` may only be read where ``mask[i, j]`` is False;
    masked cells default to NaN but their content is contractually arbitrary.
    """

    __slots__ = ("values", "mask", "column_kinds", "column_names")

    def __init__(self, values, mask, column_kinds=None, column_names=None):
        values = np.array(values, dtype=float)
        mask = np.array(mask, dtype=bool)
        if values.ndim != 2:
            raise ValueError("values must be 2-dimensional")
        if values.shape != mask.shape:
            raise ValueError(
                f"values shape {values.shape} != mask shape {mask.shape}"
            )
        n, d = values.shape
        if n < 1 or d < 1:
            raise ValueError("matrix must have at least one row and column")
        if column_kinds is None:
            column_kinds = [continuous()] * d
        column_kinds = list(column_kinds)
        if len(column_kinds) != d:
            raise ValueError("one column kind per column required")
        if column_names is None:
            column_names = [f"x{j + 1}" for j in range(d)]
        column_names = [str(c) for c in column_names]
        if len(column_names) != d:
            raise ValueError("one column name per column required")
        for j, kind in enumerate(column_kinds):
            if kind.is_categorical:
                codes = values[~mask[:, j], j]
                if codes.size and (
                    np.any(codes != np.round(codes))
                    or codes.min() < 0
                    or codes.max() >= kind.n_levels
                ):
                    raise ValueError(
                        f"column {column_names[j]!r}: categorical codes must "
                        f"be integers in [0, {kind.n_levels})"
                    )
        values = values.copy()
        values[mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "column_kinds", tuple(column_kinds))
        object.__setattr__(self, "column_names", tuple(column_names))

    def __setattr__(self, name, value):
        raise AttributeError("MaskedMatrix is immutable")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def filled(self, fill) -> np.ndarray:
        """Dense copy with masked cells replaced by ``fill``.

        ``fill`` may be a scalar, a length-d vector (per-column fill), or an
        n x d array.  Uses ``np.where`` so stored sentinel values are never
        touched arithmetically.
        """
        fill = np.asarray(fill, dtype=float)
        if fill.ndim == 1:
            fill = np.broadcast_to(fill, self.values.shape)
        return np.where(self.mask, fill, self.values)

    def zero_filled(self) -> np.ndarray:
        return self.filled(0.0)

    def take_rows(self, idx) -> "MaskedMatrix":
        return MaskedMatrix(
            self.values[idx], self.mask[idx], self.column_kinds, self.column_names
        )

    def with_values(self, values, mask=None) -> "MaskedMatrix":
        return MaskedMatrix(
            values,
            self.mask if mask is None else mask,
            self.column_kinds,
            self.column_names,
        )

    def row_pattern(self, i: int) -> Pattern:
        return Pattern.from_row(self.mask[i])


@dataclass(frozen=True)
class TargetVector:
    """Response vector; never missing.  ``task`` is 'regression' or 'binary'."""

    y: np.ndarray
    task: str = "regression"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise ValueError("y must be 1-dimensional")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets can never be missing or non-finite")
        if self.task not in ("regression", "binary"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "binary" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("binary targets must lie in {0, 1}")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx) -> "TargetVector":
        return TargetVector(self.y[idx], self.task)


def masked_dot(w, x, m) -> float:
    """Inner product of ``w`` and ``x`` restricted to observed coordinates.

    Equivalent to zero-imputing the masked entries of ``x``; the result never
    depends on what a masked cell stores.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    bits = m.as_array() if isinstance(m, Pattern) else np.asarray(m, dtype=bool)
    if not (w.shape == x.shape == bits.shape):
        raise ValueError(
            f"dimension mismatch: w {w.shape}, x {x.shape}, m {bits.shape}"
        )
    obs = ~bits
    return float(np.dot(w[obs], x[obs]))


def unique_patterns(mask) -> dict[Pattern, np.ndarray]:
    """Partition row indices by identical mask rows.

    Returns a dict keyed by Pattern, in first-appearance order; the group
    sizes always sum to the number of rows.
    """
    mask = np.asarray(mask, dtype=bool)
    groups: dict[Pattern, list[int]] = {}
    for i, row in enumerate(mask):
        groups.setdefault(Pattern.from_row(row), []).append(i)
    return {p: np.asarray(idx, dtype=int) for p, idx in groups.items()}


def _parse_float(token: str):
    try:
        return float(token)
    except ValueError:
        return None


def read_csv(path, na_token: str = "NA", target: str | None = None, kinds=None):
    """Read a headered CSV into a MaskedMatrix plus optional target vector.

    Cells equal to ``na_token`` become masked.  Columns whose observed cells
    all parse as numbers are continuous; anything else is categorical with
    integer level codes assigned in first-appearance order.  ``kinds`` may
    force a column with ``{"colname": "categorical"}`` style hints.  The
    target column, when named, must parse numerically and contain no
    ``na_token`` cells.
    """
    kinds = dict(kinds or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    ncol = len(header)
    for i, row in enumerate(body):
        if len(row) != ncol:
            raise ValueError(f"{path}: row {i + 2} has {len(row)} cells, expected {ncol}")

    target_idx = None
    if target is not None:
        if target not in header:
            raise ValueError(f"{path}: no column named {target!r}")
        target_idx = header.index(target)

    feat_idx = [j for j in range(ncol) if j != target_idx]
    names = [header[j] for j in feat_idx]
    n = len(body)
    values = np.zeros((n, len(feat_idx)))
    mask = np.zeros((n, len(feat_idx)), dtype=bool)
    col_kinds: list[ColumnKind] = []

    for out_j, j in enumerate(feat_idx):
        cells = [row[j].strip() for row in body]
        missing = [c == na_token for c in cells]
        observed = [c for c, miss in zip(cells, missing) if not miss]
        forced = kinds.get(header[j])
        numeric = [_parse_float(c) for c in observed]
        is_numeric = all(v is not None for v in numeric) and forced != CATEGORICAL
        if forced == CONTINUOUS and not is_numeric:
            raise ValueError(
                f"{path}: column {header[j]!r} declared continuous but has "
                f"unparsable numeric cells"
            )
        if is_numeric:
            col_kinds.append(continuous())
            it = iter(numeric)
            for i in range(n):
                if missing[i]:
                    mask[i, out_j] = True
                else:
                    values[i, out_j] = next(it)
        else:
            levels: list[str] = []
            code: dict[str, int] = {}
            for i in range(n):
                if missing[i]:
                    mask[i, out_j] = True
                    continue
                c = cells[i]
                if c not in code:
                    code[c] = len(levels)
                    levels.append(c)
                values[i, out_j] = code[c]
            col_kinds.append(categorical(levels))

    mm = MaskedMatrix(values, mask, col_kinds, names)

    tv = None
    if target_idx is not None:
        cells = [row[target_idx].strip() for row in body]
        if any(c == na_token for c in cells):
            raise ValueError(f"{path}: target column {target!r} contains {na_token!r}")
        parsed = [_parse_float(c) for c in cells]
        if any(v is None for v in parsed):
            raise ValueError(f"{path}: target column {target!r} is not numeric")
        y = np.asarray(parsed, dtype=float)
        task = "binary" if np.all(np.isin(y, (0.0, 1.0))) else "regression"
        tv = TargetVector(y, task)
    return mm, tv


def write_csv(path, mm: MaskedMatrix, target: TargetVector | None = None,
              target_name: str = "y", na_token: str = "NA") -> None:
    """Write a MaskedMatrix (and optional target) back to CSV.

    Categorical codes are written as their level labels, so a read/write
    round trip preserves values, masks, and level codes exactly.
    """
    header = list(mm.column_names)
    if target is not None:
        header.append(target_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(mm.n_rows):
            row = []
            for j, kind in enumerate(mm.column_kinds):
                if mm.mask[i, j]:
                    row.append(na_token)
                elif kind.is_categorical:
                    row.append(kind.levels[int(mm.values[i, j])])
                else:
                    row.append(repr(float(mm.values[i, j])))
            if target is not None:
                yv = target.y[i]
                row.append(repr(int(yv)) if target.task == "binary" else repr(float(yv)))
            writer.writerow(row)
