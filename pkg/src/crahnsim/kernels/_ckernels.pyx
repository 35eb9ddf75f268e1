# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""

import numpy as np
from libc.math cimport exp

NAME = "cython"

cdef double CLIP = 36.0


cdef inline double _sig(double z) noexcept nogil:
    if z > CLIP:
        z = CLIP
    elif z < -CLIP:
        z = -CLIP
    return 1.0 / (1.0 + exp(-z))


cdef double _pass(double[:, ::1] w1, double[::1] b1, double[:, ::1] w2, double[::1] b2,
                  double[:, ::1] X, double[:, ::1] Y, double[::1] h, double[::1] d2,
                  double[:, ::1] g1, double[::1] gb1, double[:, ::1] g2, double[::1] gb2,
                  bint want_grad) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], ni = X.shape[1], nh = w1.shape[0], no = w2.shape[0]
    cdef Py_ssize_t s, i, j, k
    cdef double z, y, e, a, d1, sse = 0.0
    cdef double scale = 2.0 / (n * no)
    if want_grad:
        g1[:, :] = 0.0
        gb1[:] = 0.0
        g2[:, :] = 0.0
        gb2[:] = 0.0
    for s in range(n):
        for j in range(nh):
            z = b1[j]
            for i in range(ni):
                z = z + w1[j, i] * X[s, i]
            h[j] = _sig(z)
        for k in range(no):
            z = b2[k]
            for j in range(nh):
                z = z + w2[k, j] * h[j]
            y = _sig(z)
            e = y - Y[s, k]
            sse = sse + e * e
            d2[k] = scale * e * y * (1.0 - y)
        if not want_grad:
            continue
        for k in range(no):
            gb2[k] += d2[k]
            for j in range(nh):
                g2[k, j] += d2[k] * h[j]
        for j in range(nh):
            a = 0.0
            for k in range(no):
                a = a + d2[k] * w2[k, j]
            d1 = a * h[j] * (1.0 - h[j])
            gb1[j] += d1
            for i in range(ni):
                g1[j, i] += d1 * X[s, i]
    return sse / (n * no)


def batch_mse(w1, b1, w2, b2, X, Y):
    cdef double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    h = np.empty(w1v.shape[0])
    d2 = np.empty(w2v.shape[0])
    return _pass(w1v, np.ascontiguousarray(b1, dtype=np.float64), w2v,
                 np.ascontiguousarray(b2, dtype=np.float64), Xv,
                 np.ascontiguousarray(Y, dtype=np.float64), h, d2,
                 np.empty((1, 1)), np.empty(1), np.empty((1, 1)), np.empty(1), False)


def train_full_batch(w1, b1, w2, b2, X, Y, double lr, Py_ssize_t max_epochs, double target_mse):
    w1 = np.array(w1, dtype=np.float64, order="C", copy=True)
    b1 = np.array(b1, dtype=np.float64, order="C", copy=True)
    w2 = np.array(w2, dtype=np.float64, order="C", copy=True)
    b2 = np.array(b2, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] w1v = w1, w2v = w2
    cdef double[::1] b1v = b1, b2v = b2
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t nh = w1v.shape[0], ni = w1v.shape[1], no = w2v.shape[0]
    cdef double[::1] h = np.empty(nh), d2 = np.empty(no)
    cdef double[:, ::1] g1 = np.empty((nh, ni)), g2 = np.empty((no, nh))
    cdef double[::1] gb1 = np.empty(nh), gb2 = np.empty(no)
    best = [w1.copy(), b1.copy(), w2.copy(), b2.copy()]
    cdef double[:, ::1] bw1 = best[0], bw2 = best[2]
    cdef double[::1] bb1 = best[1], bb2 = best[3]
    history = np.empty(max_epochs, dtype=np.float64)
    cdef double[::1] hist = history
    cdef double mse, best_mse = np.inf, final
    cdef Py_ssize_t epoch, i, j, k
    with nogil:
        for epoch in range(max_epochs):
            mse = _pass(w1v, b1v, w2v, b2v, Xv, Yv, h, d2, g1, gb1, g2, gb2, True)
            hist[epoch] = mse
            if mse < best_mse:
                best_mse = mse
                bw1[:, :] = w1v
                bb1[:] = b1v
                bw2[:, :] = w2v
                bb2[:] = b2v
            if mse <= target_mse:
                break
            for j in range(nh):
                b1v[j] -= lr * gb1[j]
                for i in range(ni):
                    w1v[j, i] -= lr * g1[j, i]
            for k in range(no):
                b2v[k] -= lr * gb2[k]
                for j in range(nh):
                    w2v[k, j] -= lr * g2[k, j]
    if mse <= target_mse:
        return w1, b1, w2, b2, epoch + 1, mse, history[: epoch + 1]
    final = _pass(w1v, b1v, w2v, b2v, Xv, Yv, h, d2, g1, gb1, g2, gb2, False)
    if best_mse < final:
        return best[0], best[1], best[2], best[3], max_epochs, best_mse, history
    return w1, b1, w2, b2, max_epochs, final, history


def sense_busy(su_xy, pu_xy, pu_channel, pu_active, double range_m, Py_ssize_t num_channels):
    cdef double[:, ::1] su = np.ascontiguousarray(su_xy, dtype=np.float64)
    cdef double[:, ::1] pu = np.ascontiguousarray(pu_xy, dtype=np.float64).reshape(-1, 2)
    cdef long long[::1] ch = np.ascontiguousarray(pu_channel, dtype=np.int64)
    cdef unsigned char[::1] act = np.ascontiguousarray(pu_active, dtype=np.uint8)
    out = np.zeros((su.shape[0], num_channels), dtype=np.uint8)
    cdef unsigned char[:, ::1] busy = out
    cdef Py_ssize_t s, p
    cdef double dx, dy, r2 = range_m * range_m
    with nogil:
        for s in range(su.shape[0]):
            for p in range(pu.shape[0]):
                if not act[p]:
                    continue
                dx = su[s, 0] - pu[p, 0]
                dy = su[s, 1] - pu[p, 1]
                if dx * dx + dy * dy <= r2:
                    busy[s, ch[p]] = 1
    return out


def adjacency(xy, double range_m):
    cdef double[:, ::1] p = np.ascontiguousarray(xy, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i, j
    out = np.zeros((n, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] adj = out
    cdef double dx, dy, r2 = range_m * range_m
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                if dx * dx + dy * dy <= r2:
                    adj[i, j] = 1
                    adj[j, i] = 1
    return out


def window_features(times_ms, busy, Py_ssize_t start, Py_ssize_t end, long long now_ms,
                    long long window_ms):
    cdef long long[::1] t = np.ascontiguousarray(times_ms, dtype=np.int64)
    cdef const unsigned char[:, :] b = busy
    cdef Py_ssize_t n_ch = b.shape[0]
    out = np.empty((n_ch, 3), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef long long cutoff = now_ms - window_ms
    cdef Py_ssize_t lo = start, idx, c
    cdef long long nb, last, total, run_start, runs
    cdef bint in_run
    cdef double w_s = window_ms / 1000.0
    while lo < end and t[lo] < cutoff:
        lo += 1
    cdef Py_ssize_t n = end - lo
    with nogil:
        for c in range(n_ch):
            if n == 0:
                o[c, 0] = 0.0
                o[c, 1] = w_s
                o[c, 2] = w_s
                continue
            nb = 0
            last = -1
            total = 0
            runs = 0
            in_run = False
            run_start = 0
            for idx in range(lo, end):
                if b[c, idx]:
                    nb += 1
                    last = t[idx]
                    if in_run:
                        total += t[idx] - run_start
                        in_run = False
                elif not in_run:
                    in_run = True
                    run_start = t[idx]
                    runs += 1
            if in_run:
                total += now_ms - run_start
            o[c, 0] = <double>nb / <double>n
            o[c, 1] = (now_ms - last) / 1000.0 if nb > 0 else w_s
            o[c, 2] = (<double>total / <double>runs) / 1000.0 if runs > 0 else 0.0
    return out
