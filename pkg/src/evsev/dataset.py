"""Numeric design matrix with labels, feature names, and a lineage role.

Every Dataset carries the partition it belongs to ("all", "train",
"validation", "test"). Operations that fit state (preprocessing stats,
feature selection, resampling) demand the train role, so leakage from
held-out partitions fails loudly instead of silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, LineageError

CLASS_NAMES = ("KA", "BC", "O")
N_CLASSES = 3

ROLES = ("all", "train", "validation", "test")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    role: str = "all"

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise DataError("X must be a 2-d matrix")
        if self.y.shape != (self.X.shape[0],):
            raise DataError("y length must match X rows")
        if not np.isfinite(self.X).all():
            raise DataError("X contains non-finite values")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise DataError(f"labels must lie in [0, {N_CLASSES})")
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names length must match X columns")
        if self.role not in ROLES:
            raise DataError(f"unknown dataset role: {self.role!r}")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=N_CLASSES)

    def subset(self, indices, role=None) -> "Dataset":
        return Dataset(
            X=self.X[indices],
            y=self.y[indices],
            feature_names=list(self.feature_names),
            role=self.role if role is None else role,
        )

    def select_features(self, names) -> "Dataset":
        lookup = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise DataError(f"unknown feature names: {missing}")
        cols = [lookup[n] for n in names]
        return Dataset(
            X=self.X[:, cols], y=self.y.copy(),
            feature_names=list(names), role=self.role,
        )


def require_role(ds: Dataset, role: str, op: str):
    """Guard fit-type operations against held-out partitions."""
    if ds.role != role:
        raise LineageError(
            f"{op} requires a {role!r} dataset, got role {ds.role!r}"
        )
