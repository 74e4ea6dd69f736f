"""Dataset ingestion, Monte-Carlo train/test splitting, and standardization.

All statistics are fitted on the training partition only. Datasets are
immutable after construction.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATA_DIR_ENV = "PARETOGP_DATA_DIR"
SYNTHETIC_NAME = "synthetic"


class DatasetError(ValueError):
    pass


class DatasetNotFound(DatasetError):
    pass


@dataclass(frozen=True)
class RawDataset:
    name: str
    X: np.ndarray  # n x d
    y: np.ndarray  # n

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DatasetError("feature matrix and target shapes are inconsistent")
        if self.X.shape[0] < 2 or self.X.shape[1] < 1:
            raise DatasetError("dataset needs at least 2 rows and 1 feature")


@dataclass(frozen=True)
class SplitDataset:
    """75/25-style row partition with train-fitted standardization applied."""

    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float
    seed: int


def load_csv(path) -> RawDataset:
    """Read a UTF-8 CSV with a header row; the last column is the target."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DatasetError(f"{path}: header must list at least one feature and the target")
        width = len(header)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) != width:
                raise DatasetError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
            parsed = []
            for colno, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, "
                        f"column {colno + 1} ({header[colno]})"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DatasetError(f"{path}: empty dataset (header only)")
    arr = np.asarray(rows, dtype=np.float64)
    return RawDataset(name=path.stem, X=arr[:, :-1], y=arr[:, -1])


def split_rows(raw: RawDataset, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly random row partition; train size is floor(fraction * n)."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = raw.X.shape[0]
    n_train = math.floor(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DatasetError(f"split of {n} rows at fraction {train_fraction} leaves a partition empty")
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def standardize(raw: RawDataset, train_idx, test_idx, seed: int) -> SplitDataset:
    """Standardize features and target with statistics fitted on the train rows.

    Population standard deviation (divisor n) is used; zero-variance columns
    map to all-zeros in both partitions.
    """
    X_train = raw.X[train_idx]
    X_test = raw.X[test_idx]
    means = X_train.mean(axis=0)
    stds = X_train.std(axis=0)
    inv = np.where(stds > 0, 1.0 / np.where(stds > 0, stds, 1.0), 0.0)
    y_train = raw.y[train_idx]
    y_test = raw.y[test_idx]
    t_mean = float(y_train.mean())
    t_std = float(y_train.std())
    t_inv = 1.0 / t_std if t_std > 0 else 0.0
    return SplitDataset(
        name=raw.name,
        X_train=(X_train - means) * inv,
        y_train=(y_train - t_mean) * t_inv,
        X_test=(X_test - means) * inv,
        y_test=(y_test - t_mean) * t_inv,
        feature_means=means,
        feature_stds=stds,
        target_mean=t_mean,
        target_std=t_std,
        seed=seed,
    )


def split_and_standardize(raw: RawDataset, train_fraction: float, seed: int) -> SplitDataset:
    rng = np.random.default_rng(seed)
    train_idx, test_idx = split_rows(raw, train_fraction, rng)
    return standardize(raw, train_idx, test_idx, seed)


def make_synthetic(
    name: str = SYNTHETIC_NAME,
    n_rows: int = 256,
    n_features: int = 3,
    n_terms: int = 4,
    noise: float = 0.05,
    seed: int = 7,
) -> RawDataset:
    """Seeded synthetic regression task: a sum of random smooth feature
    interactions plus Gaussian noise. Test plumbing, not a benchmark."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(n_rows, n_features))
    y = np.zeros(n_rows)
    for _ in range(n_terms):
        coef = rng.uniform(-2.0, 2.0)
        form = rng.integers(3)
        i = int(rng.integers(n_features))
        j = int(rng.integers(n_features))
        if form == 0:
            term = X[:, i] * X[:, j]
        elif form == 1:
            term = X[:, i] ** 2
        else:
            term = np.sqrt(np.abs(X[:, i]))
        y = y + coef * term
    spread = y.std()
    if spread == 0:
        spread = 1.0
    y = y + rng.normal(0.0, noise * spread, size=n_rows)
    return RawDataset(name=name, X=X, y=y)


def dataset_dir(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path.cwd() / "datasets"


def resolve_dataset(name: str, data_dir=None) -> RawDataset:
    """Look a dataset up by name: the built-in synthetic task, or a CSV
    addressed by file stem inside the dataset directory."""
    if name == SYNTHETIC_NAME:
        return make_synthetic()
    path = dataset_dir(data_dir) / f"{name}.csv"
    if not path.exists():
        raise DatasetNotFound(
            f"dataset {name!r} not found at {path} "
            f"(set {DATA_DIR_ENV} or pass an explicit data directory)"
        )
    return load_csv(path)
