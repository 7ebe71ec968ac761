"""Datasets with a binary label and a binary sensitive attribute."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, LoadError


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    feature_names: tuple
    sensitive_in_features: bool = False
    numeric_columns: tuple = ()  # columns z-scored by `standardize`
    dropped_rows: int = 0
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        n = len(self.labels)
        if self.features.shape[0] != n or len(self.sensitive) != n:
            raise DomainError("features, labels and sensitive must have the same number of rows")
        if self.features.shape[1] != len(self.feature_names):
            raise DomainError("feature_names length does not match the feature matrix")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("features contain non-finite values")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def sensitive_index(self) -> int | None:
        return self.p - 1 if self.sensitive_in_features else None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], labels=self.labels[idx],
                       sensitive=self.sensitive[idx], warnings=())


def _coverage_warnings(labels, sensitive):
    out = []
    if len(set(labels.tolist())) < 2:
        out.append("only one label class present")
    if len(set(sensitive.tolist())) < 2:
        out.append("only one sensitive group present")
    return tuple(out)


def _try_float(s):
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, label_column: str, sensitive_column: str, positive_label,
             sensitive_reference, include_sensitive_as_feature: bool = False) -> Dataset:
    """Read a headed CSV; numeric columns stay numeric, others are one-hot encoded.

    Rows with any empty cell are dropped and counted in ``dropped_rows``.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise LoadError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for col in (label_column, sensitive_column):
        if col not in header:
            raise LoadError(f"{path}: column {col!r} not found in header {header}")
    body, dropped = [], 0
    for row in rows[1:]:
        if not row:
            continue
        cells = [c.strip() for c in row]
        if len(cells) != len(header) or any(c == "" for c in cells):
            dropped += 1
            continue
        body.append(cells)
    if not body:
        raise LoadError(f"{path}: no complete data rows")

    cols = {h: [r[i] for r in body] for i, h in enumerate(header)}
    labels = np.array([v == str(positive_label).strip() for v in cols[label_column]], dtype=int)
    sensitive = np.array([v != str(sensitive_reference).strip() for v in cols[sensitive_column]], dtype=int)

    blocks, names, numeric = [], [], []
    for h in header:
        if h in (label_column, sensitive_column):
            continue
        parsed = [_try_float(v) for v in cols[h]]
        if all(v is not None for v in parsed):
            numeric.append(len(names))
            names.append(h)
            blocks.append(np.array(parsed, dtype=float)[:, None])
            continue
        levels = sorted(set(cols[h]))
        if len(levels) < 2:
            raise LoadError(f"{path}: categorical column {h!r} has a single distinct value {levels[0]!r}")
        values = np.array(cols[h])
        blocks.append(np.stack([(values == lv).astype(float) for lv in levels], axis=1))
        names.extend(f"{h}={lv}" for lv in levels)
    if include_sensitive_as_feature:
        blocks.append(sensitive[:, None].astype(float))
        names.append(sensitive_column)
    features = np.hstack(blocks) if blocks else np.zeros((len(body), 0))
    if len(body) < 2:
        raise LoadError(f"{path}: need at least 2 complete rows")
    return Dataset(features, labels, sensitive, tuple(names), include_sensitive_as_feature,
                   tuple(numeric), dropped, _coverage_warnings(labels, sensitive))


def split_indices(n: int, fraction: float, rng: np.random.Generator):
    if not 0 < fraction < 1:
        raise DomainError("fraction must lie strictly between 0 and 1")
    n_train = math.ceil(fraction * n)
    if n_train <= 0 or n_train >= n:
        raise DomainError(f"split of {n} rows at {fraction} leaves one side empty")
    perm = rng.permutation(n)
    return perm[:n_train], perm[n_train:]


def split_train_validation(ds: Dataset, fraction: float, rng: np.random.Generator):
    train_idx, val_idx = split_indices(ds.n, fraction, rng)
    return ds.subset(train_idx), ds.subset(val_idx)


def standardize(train: Dataset, *others: Dataset):
    """Z-score the numeric columns using statistics of ``train`` only."""
    cols = list(train.numeric_columns)
    if not cols:
        return (train, *others)
    mu = train.features[:, cols].mean(axis=0)
    sd = train.features[:, cols].std(axis=0)
    sd[sd <= 0] = 1.0

    def apply(ds):
        X = ds.features.copy()
        X[:, cols] = (X[:, cols] - mu) / sd
        return replace(ds, features=X)

    return tuple(apply(ds) for ds in (train, *others))


def generate_synthetic(n: int, bias: float, noise: float, rng: np.random.Generator,
                       include_sensitive_as_feature: bool = False) -> Dataset:
    """Biased binary-classification data with a binary sensitive attribute.

    s ~ Bernoulli(0.5) and P(y=1 | s) = 0.3 + 0.3 * bias * s.  Two informative
    features are Gaussian around a class-dependent mean; a proxy feature has
    correlation ~``bias`` with s.  Labels are flipped with probability
    ``noise`` after the features are drawn.  With ``bias = 0`` the sensitive
    attribute is independent of the features and the label.
    """
    if n < 20:
        raise DomainError("generate_synthetic needs n >= 20")
    if not 0 <= bias <= 1:
        raise DomainError("bias must lie in [0, 1]")
    if not 0 <= noise < 0.5:
        raise DomainError("noise must lie in [0, 0.5)")
    s = (rng.random(n) < 0.5).astype(int)
    y = (rng.random(n) < 0.3 + 0.3 * bias * s).astype(int)
    informative = (2 * y - 1)[:, None] * np.array([0.8, 0.5]) + rng.normal(size=(n, 2))
    proxy = bias * (2 * s - 1) + math.sqrt(1.0 - bias**2) * rng.normal(size=n)
    flip = rng.random(n) < noise
    y = np.where(flip, 1 - y, y)
    X = np.column_stack([informative, proxy])
    names = ["x_informative_1", "x_informative_2", "x_proxy"]
    if include_sensitive_as_feature:
        X = np.column_stack([X, s.astype(float)])
        names.append("s")
    return Dataset(X, y, s, tuple(names), include_sensitive_as_feature, (0, 1, 2), 0,
                   _coverage_warnings(y, s))
