# Compiled twins of the kernels in fallback.py. Tie rules and candidate
# enumeration must match the fallback exactly; tests/test_kernels.py holds
# the two backends against each other. All float inputs are float64.

import numpy as np

BACKEND = "compiled"


def best_gini_split(double[::1] values, long long[::1] labels, int n_classes,
                    int min_leaf):
    cdef Py_ssize_t n = values.shape[0]
    if n < 2 * min_leaf:
        return False, 0.0, 0.0

    cdef double[::1] left = np.zeros(n_classes)
    cdef double[::1] total = np.zeros(n_classes)
    cdef Py_ssize_t i, c
    for i in range(n):
        total[labels[i]] += 1.0

    cdef double parent_sq = 0.0
    for c in range(n_classes):
        parent_sq += total[c] * total[c]
    cdef double nn = <double> n
    cdef double parent = 1.0 - parent_sq / (nn * nn)

    cdef double best_dec = 0.0
    cdef Py_ssize_t best_pos = -1
    cdef double lsq = 0.0, rsq = parent_sq
    cdef double lc, nl, nr, dec
    cdef bint found = False
    for i in range(n - 1):
        c = labels[i]
        lc = left[c]
        # exact integer updates of the summed squared class counts
        lsq += 2.0 * lc + 1.0
        rsq += 1.0 - 2.0 * (total[c] - lc)
        left[c] = lc + 1.0
        if i + 1 < min_leaf or n - i - 1 < min_leaf:
            continue
        if values[i + 1] == values[i]:
            continue
        nl = <double> (i + 1)
        nr = nn - nl
        dec = parent - (nl / nn - lsq / (nl * nn)) - (nr / nn - rsq / (nr * nn))
        if not found or dec > best_dec:
            found = True
            best_dec = dec
            best_pos = i
    if not found:
        return False, 0.0, 0.0
    return True, (values[best_pos] + values[best_pos + 1]) / 2.0, best_dec


def best_gain_split(double[::1] values, double[::1] grad, double[::1] hess,
                    double lam, int min_leaf):
    cdef Py_ssize_t n = values.shape[0]
    if n < 2 * min_leaf:
        return False, 0.0, 0.0

    cdef double gt = 0.0, ht = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        gt += grad[i]
        ht += hess[i]
    cdef double root_term = gt * gt / (ht + lam)

    cdef double gl = 0.0, hl = 0.0, gr, hr, gain
    cdef double best_gain = 0.0
    cdef Py_ssize_t best_pos = -1
    cdef bint found = False
    for i in range(n - 1):
        gl += grad[i]
        hl += hess[i]
        if i + 1 < min_leaf or n - i - 1 < min_leaf:
            continue
        if values[i + 1] == values[i]:
            continue
        gr = gt - gl
        hr = ht - hl
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - root_term)
        if not found or gain > best_gain:
            found = True
            best_gain = gain
            best_pos = i
    if not found:
        return False, 0.0, 0.0
    return True, (values[best_pos] + values[best_pos + 1]) / 2.0, best_gain


def knn_indices(X, Q, int k, exclude):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    exclude = np.ascontiguousarray(exclude, dtype=np.int64)
    cdef double[:, ::1] Xv = X
    cdef double[:, ::1] Qv = Q
    cdef long long[::1] exv = exclude
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t d = Xv.shape[1]
    cdef Py_ssize_t m = Qv.shape[0]
    out_arr = np.empty((m, k), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef double[::1] best_d = np.empty(k)
    cdef long long[::1] best_i = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t j, i, t, p, q
    cdef Py_ssize_t filled
    cdef long long ex
    cdef double dist, diff

    for j in range(m):
        ex = exv[j]
        filled = 0
        for i in range(n):
            if i == ex:
                continue
            dist = 0.0
            for t in range(d):
                diff = Xv[i, t] - Qv[j, t]
                dist += diff * diff
            if filled == k:
                # ranked after the current k-th by (distance, index)
                if dist > best_d[k - 1]:
                    continue
                if dist == best_d[k - 1] and i > best_i[k - 1]:
                    continue
                p = k - 1
            else:
                p = filled
                filled += 1
            while p > 0 and (best_d[p - 1] > dist or
                             (best_d[p - 1] == dist and best_i[p - 1] > i)):
                best_d[p] = best_d[p - 1]
                best_i[p] = best_i[p - 1]
                p -= 1
            best_d[p] = dist
            best_i[p] = i
        for q in range(k):
            out[j, q] = best_i[q]
    return out_arr


ctypedef fused real:
    float
    double


def selective_scan_forward(real[:, :, :, ::1] dA, real[:, :, ::1] dt,
                           real[:, :, ::1] B, real[:, :, ::1] C,
                           real[::1] D, real[:, :, ::1] x):
    cdef Py_ssize_t b = dA.shape[0], T = dA.shape[1]
    cdef Py_ssize_t d = dA.shape[2], n = dA.shape[3]
    if real is float:
        h_arr = np.empty((b, T, d, n), dtype=np.float32)
        y_arr = np.empty((b, T, d), dtype=np.float32)
    else:
        h_arr = np.empty((b, T, d, n))
        y_arr = np.empty((b, T, d))
    cdef real[:, :, :, ::1] h = h_arr
    cdef real[:, :, ::1] y = y_arr
    cdef Py_ssize_t ib, t, i, j
    cdef real acc, s, dtx
    for ib in range(b):
        for t in range(T):
            for i in range(d):
                dtx = dt[ib, t, i] * x[ib, t, i]
                acc = 0.0
                if t == 0:
                    for j in range(n):
                        s = dtx * B[ib, t, j]
                        h[ib, t, i, j] = s
                        acc += C[ib, t, j] * s
                else:
                    for j in range(n):
                        s = dA[ib, t, i, j] * h[ib, t - 1, i, j] + dtx * B[ib, t, j]
                        h[ib, t, i, j] = s
                        acc += C[ib, t, j] * s
                y[ib, t, i] = acc + D[i] * x[ib, t, i]
    return y_arr, h_arr


def selective_scan_backward(real[:, :, ::1] dy, real[:, :, :, ::1] h,
                            real[:, :, :, ::1] dA, real[:, :, ::1] dt,
                            real[:, ::1] A, real[:, :, ::1] B,
                            real[:, :, ::1] C, real[::1] D,
                            real[:, :, ::1] x):
    cdef Py_ssize_t b = dA.shape[0], T = dA.shape[1]
    cdef Py_ssize_t d = dA.shape[2], n = dA.shape[3]
    if real is float:
        d_dt_arr = np.empty((b, T, d), dtype=np.float32)
        d_A_arr = np.zeros((d, n), dtype=np.float32)
        d_B_arr = np.zeros((b, T, n), dtype=np.float32)
        d_C_arr = np.zeros((b, T, n), dtype=np.float32)
        d_D_arr = np.zeros(d, dtype=np.float32)
        d_x_arr = np.empty((b, T, d), dtype=np.float32)
        g_arr = np.empty(n, dtype=np.float32)
    else:
        d_dt_arr = np.empty((b, T, d))
        d_A_arr = np.zeros((d, n))
        d_B_arr = np.zeros((b, T, n))
        d_C_arr = np.zeros((b, T, n))
        d_D_arr = np.zeros(d)
        d_x_arr = np.empty((b, T, d))
        g_arr = np.empty(n)
    cdef real[:, :, ::1] d_dt = d_dt_arr, d_B = d_B_arr, d_C = d_C_arr
    cdef real[:, :, ::1] d_x = d_x_arr
    cdef real[:, ::1] d_A = d_A_arr
    cdef real[::1] d_D = d_D_arr
    cdef real[::1] g = g_arr
    cdef Py_ssize_t ib, t, i, j
    cdef real dyv, dtv, xv, hp, gh, acc_a, acc_b
    for ib in range(b):
        for i in range(d):
            for j in range(n):
                g[j] = 0.0
            for t in range(T - 1, -1, -1):
                dyv = dy[ib, t, i]
                dtv = dt[ib, t, i]
                xv = x[ib, t, i]
                d_D[i] += dyv * xv
                acc_a = 0.0
                acc_b = 0.0
                for j in range(n):
                    g[j] += dyv * C[ib, t, j]
                    d_C[ib, t, j] += dyv * h[ib, t, i, j]
                    hp = h[ib, t - 1, i, j] if t > 0 else 0.0
                    gh = g[j] * hp * dA[ib, t, i, j]
                    d_A[i, j] += gh * dtv
                    acc_a += gh * A[i, j]
                    acc_b += g[j] * B[ib, t, j]
                    d_B[ib, t, j] += g[j] * dtv * xv
                    g[j] *= dA[ib, t, i, j]
                d_dt[ib, t, i] = acc_a + acc_b * xv
                d_x[ib, t, i] = dyv * D[i] + acc_b * dtv
    return d_dt_arr, d_A_arr, d_B_arr, d_C_arr, d_D_arr, d_x_arr


def ssm_scan_forward(double[:, :, :, ::1] dA, double[:, :, :, ::1] dBx,
                     double[:, :, ::1] C, double[::1] D,
                     double[:, :, ::1] x):
    cdef Py_ssize_t b = dA.shape[0], T = dA.shape[1]
    cdef Py_ssize_t d = dA.shape[2], n = dA.shape[3]
    h_arr = np.empty((b, T, d, n))
    y_arr = np.empty((b, T, d))
    cdef double[:, :, :, ::1] h = h_arr
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t ib, t, i, j
    cdef double acc, s
    for ib in range(b):
        for t in range(T):
            for i in range(d):
                acc = 0.0
                if t == 0:
                    for j in range(n):
                        s = dBx[ib, t, i, j]
                        h[ib, t, i, j] = s
                        acc += C[ib, t, j] * s
                else:
                    for j in range(n):
                        s = dA[ib, t, i, j] * h[ib, t - 1, i, j] + dBx[ib, t, i, j]
                        h[ib, t, i, j] = s
                        acc += C[ib, t, j] * s
                y[ib, t, i] = acc + D[i] * x[ib, t, i]
    return y_arr, h_arr


def ssm_scan_backward(double[:, :, ::1] dy, double[:, :, :, ::1] h,
                      double[:, :, :, ::1] dA, double[:, :, ::1] C,
                      double[::1] D, double[:, :, ::1] x):
    cdef Py_ssize_t b = dA.shape[0], T = dA.shape[1]
    cdef Py_ssize_t d = dA.shape[2], n = dA.shape[3]
    d_dA_arr = np.zeros((b, T, d, n))
    d_dBx_arr = np.empty((b, T, d, n))
    dC_arr = np.zeros((b, T, n))
    dD_arr = np.zeros(d)
    dx_arr = np.empty((b, T, d))
    cdef double[:, :, :, ::1] d_dA = d_dA_arr, d_dBx = d_dBx_arr
    cdef double[:, :, ::1] dC = dC_arr, dx = dx_arr
    cdef double[::1] dD = dD_arr
    cdef double[::1] g = np.empty(n)
    cdef Py_ssize_t ib, t, i, j
    cdef double dyv
    for ib in range(b):
        for i in range(d):
            for j in range(n):
                g[j] = 0.0
            for t in range(T - 1, -1, -1):
                dyv = dy[ib, t, i]
                dD[i] += dyv * x[ib, t, i]
                dx[ib, t, i] = dyv * D[i]
                for j in range(n):
                    g[j] += dyv * C[ib, t, j]
                    dC[ib, t, j] += dyv * h[ib, t, i, j]
                    d_dBx[ib, t, i, j] = g[j]
                    if t > 0:
                        d_dA[ib, t, i, j] = g[j] * h[ib, t - 1, i, j]
                    g[j] *= dA[ib, t, i, j]
    return d_dA_arr, d_dBx_arr, dC_arr, dD_arr, dx_arr
