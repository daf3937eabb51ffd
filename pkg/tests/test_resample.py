import numpy as np
import pytest

from evsev.dataset import Dataset
from evsev.errors import (AbsentClassError, DataError, LineageError,
                          SingletonClassError)
from evsev.resample import (class_weights, enn, knn, smote, smoteenn)


def _ds(X, y, role="train"):
    names = [f"f{j}" for j in range(X.shape[1])]
    return Dataset(np.asarray(X, float), np.asarray(y), names, role=role)


def _random_ds(rng, n, d=4, counts=None):
    if counts is None:
        y = rng.integers(0, 3, n)
    else:
        y = np.repeat([0, 1, 2], counts)
    X = rng.normal(size=(len(y), d))
    return _ds(X, y)


def test_knn_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    for qi in range(30):
        q = rng.normal(size=3)
        got = knn(X, q, k=5)
        d = np.sum((X - q) ** 2, axis=1)
        want = np.argsort(d, kind="stable")[:5]
        assert np.array_equal(np.sort(got), np.sort(want))
        assert d[got].max() <= np.sort(d)[4] + 1e-12


def test_knn_excludes_self():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 2))
    got = knn(X, X[7], k=4, exclude_index=7)
    assert 7 not in got


def test_smote_synthetics_are_convex_and_label_preserving():
    rng = np.random.default_rng(2)
    D = _random_ds(rng, 0, counts=(12, 30, 60))
    out, report = smote(D, seed=4)
    assert np.array_equal(out.X[: D.n_rows], D.X)  # originals retained first
    assert np.array_equal(out.y[: D.n_rows], D.y)
    counts = out.class_counts()
    assert counts.tolist() == [60, 60, 60]  # default target = majority
    for i in range(D.n_rows, out.n_rows):
        c = out.y[i]
        same = D.X[D.y == c]
        # convexity: within the class's bounding box
        lo = same.min(axis=0) - 1e-9
        hi = same.max(axis=0) + 1e-9
        assert np.all(out.X[i] >= lo) and np.all(out.X[i] <= hi)
    assert report.synthesized.tolist() == [48, 30, 0]


def test_smote_rejects_impossible_classes():
    rng = np.random.default_rng(3)
    with pytest.raises(AbsentClassError):
        smote(_ds(rng.normal(size=(5, 2)), [1, 1, 2, 2, 2]))
    with pytest.raises(SingletonClassError):
        smote(_ds(rng.normal(size=(6, 2)), [0, 1, 1, 2, 2, 2]))


def _enn_oracle(X, y, k):
    keep = []
    n = len(y)
    for i in range(n):
        d = np.sum((X - X[i]) ** 2, axis=1)
        d[i] = np.inf
        nb = np.argsort(d, kind="stable")[:k]
        votes = np.bincount(y[nb], minlength=3)
        majority = int(np.argmax(votes))  # ties to smallest class
        if y[i] == majority:
            keep.append(i)
    return np.array(keep, dtype=int)


def test_enn_matches_brute_force_on_random_sets():
    rng = np.random.default_rng(5)
    for _ in range(40):
        n = int(rng.integers(8, 50))
        X = rng.normal(size=(n, 3)).round(2)  # rounding makes distance ties
        y = rng.integers(0, 3, n)
        D = _ds(X, y)
        out, report = enn(D)
        keep = _enn_oracle(X, y, 3)
        assert np.array_equal(out.X, X[keep])
        assert np.array_equal(out.y, y[keep])
        assert report.removed.sum() == n - keep.size


def test_enn_requires_enough_rows():
    with pytest.raises(DataError):
        enn(_ds(np.zeros((3, 2)), [0, 1, 2]))


def test_smoteenn_chains_reports():
    rng = np.random.default_rng(6)
    D = _random_ds(rng, 0, counts=(10, 25, 70))
    out, report = smoteenn(D, seed=1)
    assert report.original.tolist() == [10, 25, 70]
    assert report.post_smote.tolist() == [70, 70, 70]
    assert np.array_equal(report.post_enn, out.class_counts())
    assert np.array_equal(report.post_smote - report.removed, report.post_enn)
    rows = report.rows()
    assert [r["class"] for r in rows] == ["KA", "BC", "O"]


def test_heldout_roles_are_rejected():
    rng = np.random.default_rng(7)
    for role in ("validation", "test"):
        D = _random_ds(rng, 30)
        D = Dataset(D.X, D.y, D.feature_names, role=role)
        with pytest.raises(LineageError):
            smote(D)
        with pytest.raises(LineageError):
            enn(D)
        with pytest.raises(LineageError):
            smoteenn(D)


def test_resampling_is_seed_deterministic():
    rng = np.random.default_rng(8)
    D = _random_ds(rng, 0, counts=(8, 20, 40))
    a, _ = smoteenn(D, seed=9)
    b, _ = smoteenn(D, seed=9)
    c, _ = smoteenn(D, seed=10)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)


def test_class_weights_formula():
    w = class_weights(np.array([0] * 10 + [1] * 30 + [2] * 60))
    assert np.allclose(w, [100 / 30, 100 / 90, 100 / 180])
    # aggregate influence equalized: n_c * w_c constant
    assert np.allclose(w * np.array([10, 30, 60]), 100 / 3)
