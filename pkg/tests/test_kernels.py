"""Compiled extension and pure-numpy fallback must agree bit-for-bit on
semantics: same split choices, same neighbor ordering, matching scan values
to float tolerance."""

import subprocess
import sys

import numpy as np
import pytest

from evsev._kernels import fallback

_core = pytest.importorskip("evsev._kernels._core")


def _sorted_feature(rng, n, dup_frac=0.4):
    vals = rng.normal(size=n)
    dup = rng.random(n) < dup_frac  # force ties: repeat quantized values
    vals[dup] = np.round(vals[dup], 1)
    return np.sort(vals)


def test_best_gini_split_matches_fallback():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        vals = _sorted_feature(rng, n)
        labels = rng.integers(0, 3, n)
        min_leaf = int(rng.integers(1, 4))
        a = _core.best_gini_split(vals, labels, 3, min_leaf)
        b = fallback.best_gini_split(vals, labels, 3, min_leaf)
        assert a[0] == b[0]
        if a[0]:
            assert a[1] == pytest.approx(b[1], abs=1e-12)
            assert a[2] == pytest.approx(b[2], abs=1e-12)


def test_best_gain_split_matches_fallback():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        vals = _sorted_feature(rng, n)
        grad = rng.normal(size=n)
        hess = rng.random(n) + 0.1
        lam = float(rng.choice([0.5, 1.0, 2.0]))
        min_leaf = int(rng.integers(1, 4))
        a = _core.best_gain_split(vals, grad, hess, lam, min_leaf)
        b = fallback.best_gain_split(vals, grad, hess, lam, min_leaf)
        assert a[0] == b[0]
        if a[0]:
            assert a[1] == pytest.approx(b[1], abs=1e-12)
            assert a[2] == pytest.approx(b[2], rel=1e-12, abs=1e-12)


def test_knn_indices_matches_fallback_including_ties():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n = int(rng.integers(6, 50))
        d = int(rng.integers(1, 6))
        # quantized coordinates produce exact duplicate distances
        X = np.round(rng.normal(size=(n, d)), 1)
        k = int(rng.integers(1, min(n, 8)))
        Q = X[: n // 2]
        excl = np.arange(n // 2, dtype=np.int64)
        if rng.random() < 0.5:
            excl = np.full(n // 2, -1, dtype=np.int64)
        a = _core.knn_indices(X, Q, k, excl)
        b = fallback.knn_indices(X, Q, k, excl)
        assert np.array_equal(a, b)


def _scan_inputs(rng, dtype=np.float64):
    b, T, d, n = 2, 6, 3, 4
    dA = np.exp(-rng.random((b, T, d, n))).astype(dtype)
    dBx = rng.normal(size=(b, T, d, n)).astype(dtype)
    C = rng.normal(size=(b, T, n)).astype(dtype)
    D = rng.normal(size=d).astype(dtype)
    x = rng.normal(size=(b, T, d)).astype(dtype)
    return dA, dBx, C, D, x


def test_ssm_scan_matches_fallback():
    rng = np.random.default_rng(3)
    for _ in range(20):
        dA, dBx, C, D, x = _scan_inputs(rng)
        ya, ha = _core.ssm_scan_forward(dA, dBx, C, D, x)
        yb, hb = fallback.ssm_scan_forward(dA, dBx, C, D, x)
        np.testing.assert_allclose(ya, yb, atol=1e-12)
        np.testing.assert_allclose(ha, hb, atol=1e-12)
        dy = rng.normal(size=x.shape)
        ga = _core.ssm_scan_backward(dy, ha, dA, C, D, x)
        gb = fallback.ssm_scan_backward(dy, hb, dA, C, D, x)
        for u, v in zip(ga, gb):
            np.testing.assert_allclose(u, v, atol=1e-12)


def _selective_inputs(rng, dtype=np.float64):
    b, T, d, n = 2, 6, 3, 4
    A = -rng.random((d, n)).astype(dtype)
    dt = (rng.random((b, T, d)) + 0.05).astype(dtype)
    dA = np.exp(dt[..., None] * A).astype(dtype)
    B = rng.normal(size=(b, T, n)).astype(dtype)
    C = rng.normal(size=(b, T, n)).astype(dtype)
    D = rng.normal(size=d).astype(dtype)
    x = rng.normal(size=(b, T, d)).astype(dtype)
    return dA, dt, A, B, C, D, x


@pytest.mark.parametrize("dtype,atol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_selective_scan_matches_fallback(dtype, atol):
    rng = np.random.default_rng(4)
    for _ in range(10):
        dA, dt, A, B, C, D, x = _selective_inputs(rng, dtype)
        ya, ha = _core.selective_scan_forward(dA, dt, B, C, D, x)
        yb, hb = fallback.selective_scan_forward(dA, dt, B, C, D, x)
        np.testing.assert_allclose(ya, yb, atol=atol)
        np.testing.assert_allclose(ha, hb, atol=atol)
        dy = rng.normal(size=x.shape).astype(dtype)
        ga = _core.selective_scan_backward(dy, ha, dA, dt, A, B, C, D, x)
        gb = fallback.selective_scan_backward(dy, hb, dA, dt, A, B, C, D, x)
        for u, v in zip(ga, gb):
            np.testing.assert_allclose(u, v, atol=atol)


def test_force_fallback_env_selects_fallback():
    code = "import evsev._kernels as k; print(k.backend_name())"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env={"EVSEV_FORCE_FALLBACK": "1",
                                         "PATH": "/usr/bin:/bin"})
    assert out.stdout.strip() == "fallback"


def test_default_backend_is_compiled_here():
    from evsev import _kernels
    assert _kernels.backend_name() == "compiled"
