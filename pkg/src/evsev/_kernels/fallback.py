"""Pure-numpy implementations of the hot kernels.

Semantics here are the reference: the compiled extension in ``_core.pyx``
must agree with these functions (same tie rules, same candidate split
enumeration). Both backends are exercised against each other in the tests.
"""

from __future__ import annotations

import numpy as np

BACKEND = "fallback"


def best_gini_split(values, labels, n_classes, min_leaf):
    """Best threshold split of one feature under the Gini criterion.

    ``values`` must be sorted ascending and ``labels`` permuted the same
    way. Returns ``(found, threshold, decrease)`` where ``decrease`` is the
    node-level impurity decrease ``imp(parent) - wl*imp(left) - wr*imp(right)``.
    Candidate thresholds are midpoints between consecutive distinct values;
    ties on decrease keep the lowest threshold.
    """
    n = values.shape[0]
    if n < 2 * min_leaf:
        return False, 0.0, 0.0

    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    left = np.cumsum(onehot, axis=0)  # class counts in rows [0..i]
    total = left[-1]

    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    lc = left[:-1]
    rc = total[None, :] - lc
    # gini(side) = 1 - sum(c^2)/n^2; weighted child term = (n_side/n)*gini
    gl = nl / n - (lc * lc).sum(axis=1) / (nl * n)
    gr = nr / n - (rc * rc).sum(axis=1) / (nr * n)
    parent = 1.0 - (total * total).sum() / (n * n)
    dec = parent - gl - gr

    valid = (values[1:] != values[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return False, 0.0, 0.0
    dec = np.where(valid, dec, -np.inf)
    best = int(np.argmax(dec))  # argmax takes the first max: lowest threshold
    thr = (values[best] + values[best + 1]) / 2.0
    return True, float(thr), float(dec[best])


def best_gain_split(values, grad, hess, lam, min_leaf):
    """Best threshold split of one feature for second-order boosting.

    ``values`` sorted ascending, ``grad``/``hess`` permuted alongside.
    Gain = 0.5*(GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)); ties keep the
    lowest threshold. Returns ``(found, threshold, gain)``.
    """
    n = values.shape[0]
    if n < 2 * min_leaf:
        return False, 0.0, 0.0

    gl = np.cumsum(grad)[:-1]
    hl = np.cumsum(hess)[:-1]
    gt = gl[-1] + grad[-1]
    ht = hl[-1] + hess[-1]
    gr = gt - gl
    hr = ht - hl
    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - gt * gt / (ht + lam))

    nl = np.arange(1, n)
    valid = (values[1:] != values[:-1]) & (nl >= min_leaf) & ((n - nl) >= min_leaf)
    if not valid.any():
        return False, 0.0, 0.0
    gain = np.where(valid, gain, -np.inf)
    best = int(np.argmax(gain))
    thr = (values[best] + values[best + 1]) / 2.0
    return True, float(thr), float(gain[best])


def knn_indices(X, Q, k, exclude, block=256):
    """Exact k nearest neighbors of each query row under Euclidean distance.

    ``exclude[j]`` is an index into ``X`` excluded from query j's candidates
    (-1 for none). Result rows are ordered by ascending distance with exact
    ties broken by the lower candidate index. Squared distances accumulate
    feature-by-feature in index order so both backends round identically
    and agree on ties.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    n, dim = X.shape
    m = Q.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    for start in range(0, m, block):
        stop = min(start + block, m)
        qb = Q[start:stop]
        d2 = np.zeros((stop - start, n))
        for t in range(dim):
            diff = qb[:, t, None] - X[None, :, t]
            d2 += diff * diff
        for j in range(stop - start):
            row = d2[j]
            ex = exclude[start + j]
            if ex >= 0:
                row[ex] = np.inf
            if k < n:
                part = np.argpartition(row, k - 1)[:k]
                kth = row[part].max()
                less = np.flatnonzero(row < kth)
                if less.shape[0] < k:
                    eq = np.flatnonzero(row == kth)
                    take = np.concatenate([less, eq[: k - less.shape[0]]])
                else:
                    take = less
            else:
                take = np.arange(n)
            order = np.lexsort((take, row[take]))
            out[start + j] = take[order][:k]
    return out


def ssm_scan_forward(dA, dBx, C, D, x):
    """Diagonal-state scan: h_t = dA_t*h_{t-1} + dBx_t, y_t = C_t.h_t + D*x_t.

    Shapes: dA, dBx (batch, T, d, n); C (batch, T, n); D (d,); x (batch, T, d).
    Returns (y, h) with y (batch, T, d) and the full state history h
    (batch, T, d, n) kept for the backward pass.
    """
    b, T, d, n = dA.shape
    h = np.empty_like(dA)
    y = np.empty_like(x)
    state = np.zeros((b, d, n), dtype=dA.dtype)
    for t in range(T):
        state = dA[:, t] * state + dBx[:, t]
        h[:, t] = state
        y[:, t] = np.einsum("bdn,bn->bd", state, C[:, t]) + D * x[:, t]
    return y, h


def selective_scan_forward(dA, dt, B, C, D, x):
    """Scan with the input term built in place: h_t = dA_t*h_{t-1} + dt_t*B_t*x_t.

    Shapes: dA (b,T,d,n) = exp(dt x A) precomputed; dt, x (b,T,d); B, C
    (b,T,n); D (d,). Returns (y, h) like ssm_scan_forward.
    """
    b, T, d, n = dA.shape
    h = np.empty_like(dA)
    y = np.empty_like(x)
    state = np.zeros((b, d, n), dtype=dA.dtype)
    dtx = dt * x
    for t in range(T):
        state = dA[:, t] * state + dtx[:, t, :, None] * B[:, t, None, :]
        h[:, t] = state
        y[:, t] = np.einsum("bdn,bn->bd", state, C[:, t]) + D * x[:, t]
    return y, h


def selective_scan_backward(dy, h, dA, dt, A, B, C, D, x):
    """Gradients of selective_scan_forward for all six tensor inputs.

    ``A`` (d,n) is the decay matrix whose exp product produced ``dA``;
    the exp is differentiated analytically through the cached dA values.
    Returns (d_dt, d_A, d_B, d_C, d_D, d_x).
    """
    b, T, d, n = dA.shape
    d_dt = np.zeros_like(dt)
    d_A = np.zeros_like(A)
    d_B = np.zeros_like(B)
    d_C = np.empty_like(C)
    d_x = dy * D
    g = np.zeros((b, d, n), dtype=dA.dtype)
    for t in range(T - 1, -1, -1):
        g = g + dy[:, t, :, None] * C[:, t, None, :]
        d_C[:, t] = np.einsum("bd,bdn->bn", dy[:, t], h[:, t])
        hprev = h[:, t - 1] if t > 0 else np.zeros((b, d, n), dtype=dA.dtype)
        gh = g * hprev * dA[:, t]
        d_A += np.einsum("bdn,bd->dn", gh, dt[:, t])
        d_dt[:, t] = np.einsum("bdn,dn->bd", gh, A) + np.einsum(
            "bdn,bn->bd", g, B[:, t]
        ) * x[:, t]
        d_B[:, t] = np.einsum("bdn,bd->bn", g, dt[:, t] * x[:, t])
        d_x[:, t] += np.einsum("bdn,bn->bd", g, B[:, t]) * dt[:, t]
        g = g * dA[:, t]
    d_D = np.einsum("btd,btd->d", dy, x)
    return d_dt, d_A, d_B, d_C, d_D, d_x


def ssm_scan_backward(dy, h, dA, C, D, x):
    """Gradients of the scan given upstream dy (batch, T, d).

    Returns (d_dA, d_dBx, dC, dD, dx) matching the forward input shapes.
    The dx term covers only the skip connection D*x; the dBx path's
    dependence on x is the caller's responsibility.
    """
    b, T, d, n = dA.shape
    d_dA = np.zeros_like(dA)
    d_dBx = np.empty_like(dA)
    dC = np.empty_like(C)
    g = np.zeros((b, d, n), dtype=dA.dtype)
    for t in range(T - 1, -1, -1):
        g = g + dy[:, t, :, None] * C[:, t, None, :]
        dC[:, t] = np.einsum("bd,bdn->bn", dy[:, t], h[:, t])
        d_dBx[:, t] = g
        if t > 0:
            d_dA[:, t] = g * h[:, t - 1]
        g = g * dA[:, t]
    dD = np.einsum("btd,btd->d", dy, x)
    dx = dy * D
    return d_dA, d_dBx, dC, dD, dx
