"""Class rebalancing: SMOTE oversampling, ENN cleaning, their composition.

All neighbor searches are exact Euclidean kNN (distance ties broken by
lower row index) over the numeric design matrix. Synthetic rows are
linear interpolations toward same-class neighbors, appended after the
original rows grouped by class; ENN removes rows in a single pass
against the original neighborhood structure (no cascade).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset, N_CLASSES
from .errors import AbsentClassError, DataError, LineageError, SingletonClassError


@dataclass
class ResampleReport:
    """Per-class row counts through the resampling stages."""

    original: np.ndarray
    post_smote: np.ndarray
    post_enn: np.ndarray
    synthesized: np.ndarray
    removed: np.ndarray

    def rows(self):
        from .dataset import CLASS_NAMES

        out = []
        for c, name in enumerate(CLASS_NAMES):
            out.append({
                "class": name,
                "original": int(self.original[c]),
                "synthesized": int(self.synthesized[c]),
                "post_smote": int(self.post_smote[c]),
                "removed": int(self.removed[c]),
                "post_enn": int(self.post_enn[c]),
            })
        return out


def _forbid_heldout(ds: Dataset, op: str):
    if ds.role in ("validation", "test"):
        raise LineageError(f"{op} must not run on the {ds.role!r} partition")


def knn(X, query, k, exclude_index=-1):
    """Indices of the k nearest rows to ``query``, ascending distance.

    ``exclude_index`` removes that row of X from the candidates (-1 keeps
    all). Exact ties are broken by the lower row index.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64).reshape(1, -1)
    candidates = X.shape[0] - (1 if exclude_index >= 0 else 0)
    if k < 1 or k > candidates:
        raise DataError(f"k={k} outside [1, {candidates}] available candidates")
    ex = np.array([exclude_index], dtype=np.int64)
    return _kernels.knn_indices(X, query, k, ex)[0]


def smote(D: Dataset, k=5, target_counts=None, seed=0):
    """Oversample toward ``target_counts`` (default: the majority count).

    Each synthetic row of class c is x + u (x~ - x) for a random class-c
    seed row x, a random one of its k nearest class-c neighbors x~, and
    u uniform on [0, 1]; draws come from one seed-derived stream in
    synthesis order. Original rows are kept untouched.
    """
    _forbid_heldout(D, "smote")
    counts = D.class_counts()
    if target_counts is None:
        target_counts = np.full(N_CLASSES, counts.max(), dtype=np.int64)
    else:
        target_counts = np.asarray(target_counts, dtype=np.int64)
        if target_counts.shape != (N_CLASSES,):
            raise DataError("target_counts must give one count per class")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    new_X = []
    new_y = []
    synthesized = np.zeros(N_CLASSES, dtype=np.int64)
    for c in range(N_CLASSES):
        need = int(target_counts[c] - counts[c])
        if need <= 0:
            continue
        if counts[c] == 0:
            raise AbsentClassError(f"cannot synthesize for empty class {c}")
        if counts[c] == 1:
            raise SingletonClassError(
                f"class {c} has a single sample; SMOTE needs at least 2"
            )
        rows = np.flatnonzero(D.y == c)
        Xc = np.ascontiguousarray(D.X[rows])
        kc = min(k, rows.size - 1)
        neighbors = _kernels.knn_indices(
            Xc, Xc, kc, np.arange(rows.size, dtype=np.int64)
        )
        seeds = rng.integers(0, rows.size, size=need)
        picks = rng.integers(0, kc, size=need)
        u = rng.random(size=need)
        base = Xc[seeds]
        nb = Xc[neighbors[seeds, picks]]
        new_X.append(base + u[:, None] * (nb - base))
        new_y.append(np.full(need, c, dtype=np.int64))
        synthesized[c] = need
    if new_X:
        X = np.vstack([D.X] + new_X)
        y = np.concatenate([D.y] + new_y)
    else:
        X, y = D.X, D.y
    out = Dataset(X, y, list(D.feature_names), role=D.role)
    report = ResampleReport(
        original=counts,
        post_smote=out.class_counts(),
        post_enn=out.class_counts(),
        synthesized=synthesized,
        removed=np.zeros(N_CLASSES, dtype=np.int64),
    )
    return out, report


def enn(D: Dataset, k=3):
    """Remove rows whose label disagrees with their neighborhood.

    A row is dropped iff its label differs from the most common label
    among its k nearest neighbors (self excluded; neighbor-count ties go
    to the smallest class index). Applied to every class in one pass
    computed against the original rows.
    """
    _forbid_heldout(D, "enn")
    if D.n_rows <= k:
        raise DataError(f"ENN needs more than k={k} rows, got {D.n_rows}")
    neighbors = _kernels.knn_indices(
        np.ascontiguousarray(D.X), np.ascontiguousarray(D.X), k,
        np.arange(D.n_rows, dtype=np.int64),
    )
    nb_labels = D.y[neighbors]
    votes = np.zeros((D.n_rows, N_CLASSES), dtype=np.int64)
    for c in range(N_CLASSES):
        votes[:, c] = (nb_labels == c).sum(axis=1)
    majority = np.argmax(votes, axis=1)  # ties: smallest class index
    keep = majority == D.y
    out = D.subset(np.flatnonzero(keep))
    removed = np.bincount(D.y[~keep], minlength=N_CLASSES)
    report = ResampleReport(
        original=D.class_counts(),
        post_smote=D.class_counts(),
        post_enn=out.class_counts(),
        synthesized=np.zeros(N_CLASSES, dtype=np.int64),
        removed=removed,
    )
    return out, report


def smoteenn(D: Dataset, smote_k=5, enn_k=3, target_counts=None, seed=0):
    """ENN cleaning applied after SMOTE oversampling."""
    mid, r1 = smote(D, k=smote_k, target_counts=target_counts, seed=seed)
    out, r2 = enn(mid, k=enn_k)
    report = ResampleReport(
        original=r1.original,
        post_smote=r1.post_smote,
        post_enn=r2.post_enn,
        synthesized=r1.synthesized,
        removed=r2.removed,
    )
    return out, report


def class_weights(y) -> np.ndarray:
    """w_c = N / (C * n_c); every class must be present."""
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=N_CLASSES)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise AbsentClassError(f"classes absent from labels: {missing}")
    return y.size / (N_CLASSES * counts.astype(np.float64))
