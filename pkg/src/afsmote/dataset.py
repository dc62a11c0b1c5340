"""Datasets, class statistics, stratified splitting and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    EmptyFile,
    MissingColumn,
    NaNPolicyViolation,
    NonNumericCell,
    NonPositiveDefiniteCovariance,
    TooFewPositives,
)

VALID_FRACTION = 0.25


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with binary labels (1 = minority/positive).

    ``features`` may hold NaN only when the dataset was loaded with the
    ``"mean"`` NaN policy; the pipeline imputes per fold from training
    rows.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()
    allow_nan: bool = False

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("labels length does not match feature rows")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0/1")
        if np.isinf(X).any():
            raise DataError("features contain Inf")
        if not self.allow_nan and np.isnan(X).any():
            raise NaNPolicyViolation("features contain NaN")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature columns")
        X = X.copy()
        X.flags.writeable = False
        y = y.astype(np.int64)
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names, self.allow_nan)


@dataclass(frozen=True)
class ClassStats:
    n_total: int
    n_pos: int
    pi1: float

    @property
    def n_neg(self) -> int:
        return self.n_total - self.n_pos


@dataclass(frozen=True)
class FoldSplit:
    train_indices: np.ndarray
    valid_indices: np.ndarray
    test_indices: np.ndarray


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 10_000
    pi1: float = 0.05
    dim: int = 2
    class_means: tuple = ((0.0, 0.0), (3.0, 0.0))
    class_covs: tuple = (((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.0, 1.0)))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.pi1 < 0.5:
            raise DataError(f"pi1 must lie in (0, 0.5), got {self.pi1}")
        if self.n < 2:
            raise DataError("n must be at least 2")
        for mean in self.class_means:
            if len(mean) != self.dim:
                raise DataError("class mean dimension does not match dim")
        for cov in self.class_covs:
            if np.shape(cov) != (self.dim, self.dim):
                raise DataError("class covariance shape does not match dim")


def _parse_float(text: str, row: int, col: str) -> float:
    s = text.strip()
    if s == "" or s.lower() in {"nan", "na", "null"}:
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise NonNumericCell(row, col, text) from None


def load_csv(path, label_column, nan_policy: str = "reject") -> Dataset:
    """Load a headered CSV file.

    Parameters
    ----------
    path : str or Path
    label_column : str or int
        Column name, or 0-based column index.
    nan_policy : {"reject", "mean"}
        ``"reject"`` raises on any missing/NaN cell.  ``"mean"`` keeps the
        NaNs so that the caller can impute with training-split means.
    """
    if nan_policy not in ("reject", "mean"):
        raise ValueError(f"unknown nan_policy {nan_policy!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.isdigit()
                                             and label_column not in header):
            li = int(label_column)
            if not 0 <= li < len(header):
                raise MissingColumn(f"label column index {li} out of range")
        else:
            if label_column not in header:
                raise MissingColumn(f"label column {label_column!r} not in header")
            li = header.index(label_column)
        rows, labels = [], []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} fields, expected {len(header)}")
            lab = _parse_float(rec[li], r, header[li])
            if lab not in (0.0, 1.0):
                raise DataError(f"row {r}: label {rec[li]!r} is not 0/1")
            labels.append(int(lab))
            rows.append([_parse_float(c, r, header[j]) for j, c in enumerate(rec) if j != li])
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    X = np.array(rows, dtype=float)
    if nan_policy == "reject" and np.isnan(X).any():
        r, c = map(int, np.argwhere(np.isnan(X))[0])
        raise NaNPolicyViolation(f"{path}: missing value at row {r + 1}, feature {c}")
    names = tuple(h for j, h in enumerate(header) if j != li)
    return Dataset(X, np.array(labels), names, allow_nan=(nan_policy == "mean"))


def write_csv(data: Dataset, path, label_name: str = "label") -> None:
    """Write with 17 significant digits so reloading is bit-exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.feature_names, label_name])
        for x, y in zip(data.features, data.labels):
            w.writerow([format(v, ".17g") for v in x] + [int(y)])


def class_stats(data: Dataset) -> ClassStats:
    n = int(data.labels.shape[0])
    n_pos = int(data.labels.sum())
    return ClassStats(n, n_pos, n_pos / n if n else 0.0)


def _stratified_carve(indices: np.ndarray, labels: np.ndarray, fraction: float, rng) -> tuple:
    """Split ``indices`` into (keep, carved) per class, carving ~fraction of each class."""
    keep, carved = [], []
    for cls in (0, 1):
        idx = indices[labels[indices] == cls]
        idx = idx[rng.permutation(idx.size)]
        m = round_half_up(fraction * idx.size)
        if idx.size >= 2:
            m = min(max(m, 1), idx.size - 1)
        else:
            m = 0
        carved.append(idx[:m])
        keep.append(idx[m:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(carved))


def stratified_kfold(data: Dataset, k: int = 5, seed: int = 0,
                     valid_fraction: float = VALID_FRACTION) -> list:
    """Stratified round-robin k-fold with a stratified validation carve-out.

    Each class is shuffled with the seeded generator and dealt to folds
    0, 1, ..., k-1, 0, ... so per-fold class counts differ by at most one.
    The validation set is ``valid_fraction`` of each class in the training
    portion.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    y = data.labels
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos < k or n_neg < k:
        raise TooFewPositives(f"need at least k={k} samples per class, got {n_pos} pos / {n_neg} neg")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    for cls in (1, 0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % k
    splits = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        rest = np.flatnonzero(fold_of != f)
        train, valid = _stratified_carve(rest, y, valid_fraction, rng)
        splits.append(FoldSplit(train, valid, test))
    return splits


def train_valid_split(data: Dataset, seed: int = 0, valid_fraction: float = VALID_FRACTION):
    """Single stratified train/validation split (no test fold)."""
    rng = np.random.default_rng(seed)
    return _stratified_carve(np.arange(data.n), data.labels, valid_fraction, rng)


def make_gaussian_imbalanced(spec: SyntheticSpec) -> Dataset:
    """Draw exactly ``round(n * pi1)`` positives from the class-1 Gaussian.

    Rows are shuffled so class membership is not positional.
    """
    n_pos = round_half_up(spec.n * spec.pi1)
    n_neg = spec.n - n_pos
    chols = []
    for cov in spec.class_covs:
        c = np.asarray(cov, dtype=float)
        if not np.allclose(c, c.T):
            raise NonPositiveDefiniteCovariance("covariance is not symmetric")
        try:
            chols.append(np.linalg.cholesky(c))
        except np.linalg.LinAlgError:
            raise NonPositiveDefiniteCovariance("covariance is not positive definite") from None
    rng = np.random.default_rng(spec.seed)
    parts = []
    for cls, count in ((0, n_neg), (1, n_pos)):
        z = rng.standard_normal((count, spec.dim))
        parts.append(np.asarray(spec.class_means[cls], dtype=float) + z @ chols[cls].T)
    X = np.vstack(parts)
    y = np.concatenate([np.zeros(n_neg, dtype=np.int64), np.ones(n_pos, dtype=np.int64)])
    order = rng.permutation(spec.n)
    return Dataset(X[order], y[order], tuple(f"x{j + 1}" for j in range(spec.dim)))


@dataclass
class Standardizer:
    """z-score transform fitted on training rows; also imputes NaN with train means."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = np.nanmean(X, axis=0)
        mean = np.where(np.isnan(mean), 0.0, mean)
        filled = np.where(np.isnan(X), mean, X)
        scale = filled.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.where(np.isnan(X), self.mean, X)
        return (X - self.mean) / self.scale

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.scale + self.mean
