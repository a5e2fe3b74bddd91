"""Dataset ingestion, validation, synthetic generators and splits.

Data matrices are stored column-per-sample (m features x n samples), while
CSV files hold one sample per row; :func:`load_csv` transposes on the way in
and :func:`write_csv` on the way out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataFormatError, ValidationError


@dataclass(frozen=True)
class DataMatrix:
    """An m x n float64 matrix, one column per sample."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.matrix, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"data matrix must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("data matrix contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)

    @property
    def nonneg(self) -> bool:
        return bool(np.all(self.matrix >= 0))

    @property
    def n_features(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class Dataset:
    x: DataMatrix
    truth: Optional[np.ndarray] = None
    name: str = "dataset"
    k_hint: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.x, DataMatrix):
            object.__setattr__(self, "x", DataMatrix(self.x))
        if self.truth is not None:
            t = np.asarray(self.truth)
            if t.ndim != 1 or t.shape[0] != self.x.n_samples:
                raise ValidationError(
                    f"truth has length {t.size}, expected {self.x.n_samples}"
                )
            t = t.astype(np.int64)
            if t.size and (t.min() != 0 or set(np.unique(t)) != set(range(t.max() + 1))):
                raise ValidationError("truth labels must form a contiguous range 0..k-1")
            t.setflags(write=False)
            object.__setattr__(self, "truth", t)
            if self.k_hint is None:
                object.__setattr__(self, "k_hint", int(t.max()) + 1 if t.size else None)

    @property
    def n(self) -> int:
        return self.x.n_samples

    @property
    def m(self) -> int:
        return self.x.n_features


def reindex_labels(raw: Sequence) -> np.ndarray:
    """Map arbitrary labels to 0..k-1 in order of first appearance."""
    seen: dict = {}
    return np.array([seen.setdefault(v, len(seen)) for v in raw], dtype=np.int64)


def load_csv(
    path: Union[str, Path],
    has_header: bool = True,
    label_column: Union[int, str, None] = None,
    delimiter: str = ",",
) -> Dataset:
    """Read a numeric table (rows are samples) into a :class:`Dataset`.

    ``label_column`` selects the ground-truth column by zero-based index or,
    when the file has a header, by name. Label values are treated as opaque
    strings and re-indexed in first-appearance order. All remaining cells must
    parse as floats; no imputation or scaling is done.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read file ({exc.strerror or exc})") from None
    except UnicodeDecodeError:
        raise DataFormatError(f"{path}: not a UTF-8 text file") from None
    if not rows:
        raise DataFormatError(f"{path}: file is empty")

    header = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_data_line = 2
    else:
        first_data_line = 1
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    width = len(header) if header is not None else len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataFormatError(
                f"{path}: row {i + first_data_line} has {len(r)} fields, expected {width}"
            )

    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise DataFormatError(f"{path}: no column named {label_column!r}")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if label_idx < 0:
                label_idx += width
            if not 0 <= label_idx < width:
                raise DataFormatError(f"{path}: label column {label_column} out of range")

    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise DataFormatError(f"{path}: no feature columns")
    values = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    for i, r in enumerate(rows):
        for jj, j in enumerate(feature_cols):
            cell = r[j].strip()
            try:
                values[i, jj] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric value {cell!r} at row {i + first_data_line}, "
                    f"column {j + 1}"
                ) from None
            if not math.isfinite(values[i, jj]):
                raise DataFormatError(
                    f"{path}: non-finite value {cell!r} at row {i + first_data_line}, "
                    f"column {j + 1}"
                )

    truth = None
    if label_idx is not None:
        truth = reindex_labels([r[label_idx].strip() for r in rows])
    return Dataset(x=DataMatrix(values.T), truth=truth, name=path.stem)


def write_csv(ds: Dataset, path: Union[str, Path], label_name: str = "label") -> None:
    """Write ``ds`` as rows-are-samples CSV that :func:`load_csv` reads back exactly."""
    path = Path(path)
    x = ds.x.matrix
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = [f"f{j}" for j in range(ds.m)]
        if ds.truth is not None:
            header.append(label_name)
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in x[:, i]]
            if ds.truth is not None:
                row.append(str(int(ds.truth[i])))
            w.writerow(row)


def shift_nonneg(ds: Dataset) -> Dataset:
    """Shift each feature with negative entries so that its minimum is 0."""
    x = ds.x.matrix
    mins = np.minimum(x.min(axis=1, keepdims=True), 0.0)
    return replace(ds, x=DataMatrix(x - mins))


def two_rings(
    n_per_ring: int,
    r_inner: float = 1.0,
    r_outer: float = 3.0,
    noise: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Two concentric noisy rings in the plane; ring 0 is the inner one."""
    if n_per_ring < 1:
        raise ValidationError("n_per_ring must be at least 1")
    if not 0 < r_inner < r_outer:
        raise ValidationError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    if noise < 0:
        raise ValidationError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    cols, truth = [], []
    for label, radius in enumerate((r_inner, r_outer)):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_per_ring)
        rad = radius + noise * rng.standard_normal(n_per_ring)
        cols.append(np.vstack([rad * np.cos(theta), rad * np.sin(theta)]))
        truth.extend([label] * n_per_ring)
    return Dataset(
        x=DataMatrix(np.hstack(cols)),
        truth=np.array(truth),
        name="two_rings",
        k_hint=2,
    )


def subset(ds: Dataset, idx: np.ndarray, name: str) -> Dataset:
    idx = np.asarray(idx, dtype=np.int64)
    truth = None if ds.truth is None else reindex_labels(ds.truth[idx])
    return Dataset(x=DataMatrix(ds.x.matrix[:, idx]), truth=truth, name=name)


def stratified_holdout(ds: Dataset, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Split each class in half at random; the odd sample goes to the train side.

    Both halves keep the parent's sample order. Labels in each half are
    re-indexed to stay contiguous, which only matters for classes with a
    single member.
    """
    if ds.truth is None:
        raise ValidationError("stratified_holdout requires ground-truth labels")
    rng = np.random.default_rng(seed)
    train_idx, held_idx = [], []
    for c in range(int(ds.truth.max()) + 1):
        members = np.flatnonzero(ds.truth == c)
        members = members[rng.permutation(members.size)]
        cut = (members.size + 1) // 2
        train_idx.append(members[:cut])
        held_idx.append(members[cut:])
    train = np.sort(np.concatenate(train_idx))
    held = np.sort(np.concatenate(held_idx))
    return subset(ds, train, f"{ds.name}_train"), subset(ds, held, f"{ds.name}_held")
