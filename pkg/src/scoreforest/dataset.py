"""Numeric datasets: CSV ingestion, seeded splitting and Friedman benchmark generators."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed data files or invalid dataset arguments."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (rows = cases, columns = attributes) plus a target vector."""

    features: np.ndarray
    target: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="F")
        y = np.array(self.target, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DatasetError(f"dataset needs n >= 1 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DatasetError(f"target length {y.shape[0]} != row count {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetError("dataset contains NaN or infinite values")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DatasetError(f"{len(names)} feature names for {p} columns")
        if len(set(names)) != p:
            raise DatasetError("feature names must be unique")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.target[rows], self.feature_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    validation_fraction: float = 0.0
    seed: int = 0


def _resolve_target(header: Sequence[str], target_column: Union[str, int]) -> int:
    if isinstance(target_column, int):
        idx = target_column
    elif target_column in header:
        return list(header).index(target_column)
    else:
        try:
            idx = int(target_column)
        except (TypeError, ValueError):
            raise DatasetError(f"unknown target column {target_column!r}") from None
    if not -len(header) <= idx < len(header):
        raise DatasetError(f"target column index {idx} out of range for {len(header)} columns")
    return idx % len(header)


def load_csv(path, target_column: Union[str, int], has_header: bool = True) -> Dataset:
    """Read a numeric CSV file; ``target_column`` is a header name or a column index.

    Headerless files get feature names x1..xp. Non-numeric or empty cells are
    rejected with their 1-based data row and column name.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        if not rows:
            raise DatasetError(f"{path}: empty file")
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    else:
        width = len(rows[0]) if rows else 0
        header = [f"c{j + 1}" for j in range(width)]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    t = _resolve_target(header, target_column)
    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DatasetError(
                f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{path}: row {i + 1}, column {header[j]!r}: "
                    f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}: row {i + 1}, column {header[j]!r}: non-finite value")
            values[i, j] = v
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise DatasetError(f"{path}: no feature columns besides the target")
    names = [header[j] for j in keep] if has_header else [f"x{k + 1}" for k in range(len(keep))]
    return Dataset(values[:, keep], values[:, t], tuple(names))


def write_csv(ds: Dataset, path, target_name: str = "y") -> None:
    """Write features then target, with a header, at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [target_name])
        for row, t in zip(ds.features, ds.target):
            w.writerow([format(v, ".17g") for v in row] + [format(t, ".17g")])


def _partition_sizes(n: int, spec: SplitSpec):
    if not 0.0 < spec.train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {spec.train_fraction}")
    if not 0.0 <= spec.validation_fraction < 1.0:
        raise DatasetError(
            f"validation_fraction must lie in [0, 1), got {spec.validation_fraction}")
    # small epsilon so that e.g. 506 * (400/506) floors to 400, not 399
    n_portion = int(math.floor(n * spec.train_fraction + 1e-9))
    n_val = int(math.floor(n_portion * spec.validation_fraction + 1e-9))
    n_train = n_portion - n_val
    n_test = n - n_portion
    if n_train < 1 or n_test < 1 or (spec.validation_fraction > 0 and n_val < 1):
        raise DatasetError(
            f"split of n={n} gives empty partition (train={n_train}, "
            f"validation={n_val}, test={n_test})")
    return n_train, n_val, n_test


def split(ds: Dataset, spec: SplitSpec):
    """Random disjoint train/validation/test partition.

    The training portion is ``floor(n * train_fraction)`` rows; validation takes
    ``floor(portion * validation_fraction)`` of it and the test set is the
    remainder. Rows keep their original order inside each partition. When
    ``validation_fraction`` is 0 the validation element is ``None``.
    """
    n_train, n_val, _ = _partition_sizes(ds.n, spec)
    perm = np.random.default_rng(spec.seed).permutation(ds.n)
    train_rows = np.sort(perm[:n_train])
    val_rows = np.sort(perm[n_train:n_train + n_val])
    test_rows = np.sort(perm[n_train + n_val:])
    val = ds.take(val_rows) if n_val else None
    return ds.take(train_rows), val, ds.take(test_rows)


def holdout(ds: Dataset, fraction: float, seed: int = 0):
    """Split off ``floor(n * fraction)`` random rows as a validation set."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"validation fraction must lie in (0, 1), got {fraction}")
    n_val = int(math.floor(ds.n * fraction + 1e-9))
    if n_val < 1 or n_val >= ds.n:
        raise DatasetError(f"validation fraction {fraction} leaves an empty partition at n={ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(np.sort(perm[n_val:])), ds.take(np.sort(perm[:n_val]))


# --- Friedman benchmarks ---------------------------------------------------

def friedman1_response(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def friedman2_response(X: np.ndarray, literal: bool = False) -> np.ndarray:
    """Classical Friedman #2 surface, or an alternative form when ``literal``.

    The alternative ``x1^2 + (x2*x3 - (x2*x4)^-2)^0.5`` takes a square root
    of a quantity that can dip below zero when x3 is near 0; it is clipped at 0.
    """
    X = np.asarray(X, dtype=np.float64)
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    if literal:
        return x1 ** 2 + np.sqrt(np.maximum(x2 * x3 - (x2 * x4) ** -2.0, 0.0))
    return np.sqrt(x1 ** 2 + (x2 * x3 - 1.0 / (x2 * x4)) ** 2)


def friedman3_response(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    return np.arctan((x2 * x3 - 1.0 / (x2 * x4)) / x1)


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise DatasetError(f"n must be a positive integer, got {n}")


def gen_friedman1(n: int, p_total: int = 10, noise_sd: float = 1.0,
                  irrelevant_mix: str = "uniform_only",
                  seed: Optional[int] = None) -> Dataset:
    """Friedman #1 with ``p_total - 5`` irrelevant inputs.

    ``irrelevant_mix="mixed"`` requires ``p_total == 50`` and appends 5 U(0,1),
    20 N(0,1) and 20 Lognormal(0,1) columns after the five relevant ones.
    """
    _check_n(n)
    if p_total < 5:
        raise DatasetError(f"friedman1 needs p_total >= 5, got {p_total}")
    if noise_sd < 0:
        raise DatasetError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    if irrelevant_mix == "uniform_only":
        X = rng.uniform(0.0, 1.0, size=(n, p_total))
    elif irrelevant_mix == "mixed":
        if p_total != 50:
            raise DatasetError(f"mixed irrelevant inputs require p_total=50, got {p_total}")
        X = np.hstack([
            rng.uniform(0.0, 1.0, size=(n, 10)),
            rng.standard_normal(size=(n, 20)),
            rng.lognormal(0.0, 1.0, size=(n, 20)),
        ])
    else:
        raise DatasetError(f"unknown irrelevant_mix {irrelevant_mix!r}")
    y = friedman1_response(X) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y)


def _friedman23_inputs(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([
        rng.uniform(0.0, 100.0, n),
        rng.uniform(40.0 * np.pi, 560.0 * np.pi, n),
        rng.uniform(0.0, 1.0, n),
        rng.uniform(1.0, 11.0, n),
        rng.standard_normal((n, 5)),
    ])


def gen_friedman2(n: int, noise_sd: float = 125.0, seed: Optional[int] = None,
                  literal: bool = False) -> Dataset:
    """Friedman #2 with five N(0,1) irrelevant inputs (p = 9)."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = _friedman23_inputs(n, rng)
    y = friedman2_response(X, literal=literal) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y)


def gen_friedman3(n: int, noise_sd: float = 0.1, seed: Optional[int] = None) -> Dataset:
    """Friedman #3 with five N(0,1) irrelevant inputs (p = 9)."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = _friedman23_inputs(n, rng)
    y = friedman3_response(X) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y)


GENERATORS = {
    "friedman1": gen_friedman1,
    "friedman2": gen_friedman2,
    "friedman3": gen_friedman3,
}
