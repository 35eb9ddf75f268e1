"""Numpy implementations of the hot kernels.

These are the reference semantics; ``_ckernels.pyx`` mirrors them loop by
loop. Integer-valued paths (sensing, adjacency, occupancy features) are
bit-identical between the two backends. Training is equal only to rounding
because BLAS and the C loops sum in different orders.
"""

import numpy as np

NAME = "python"
_CLIP = 36.0


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_CLIP, _CLIP)))


def _batch_mse_grad(w1, b1, w2, b2, X, Y):
    h = _sigmoid(X @ w1.T + b1)
    y = _sigmoid(h @ w2.T + b2)
    err = y - Y
    n, n_out = Y.shape
    mse = float(np.mean(err * err))
    d2 = (2.0 / (n * n_out)) * err * y * (1.0 - y)
    d1 = (d2 @ w2) * h * (1.0 - h)
    return mse, d1.T @ X, d1.sum(axis=0), d2.T @ h, d2.sum(axis=0)


def batch_mse(w1, b1, w2, b2, X, Y):
    h = _sigmoid(X @ w1.T + b1)
    y = _sigmoid(h @ w2.T + b2)
    err = y - Y
    return float(np.mean(err * err))


def train_full_batch(w1, b1, w2, b2, X, Y, lr, max_epochs, target_mse):
    w1, b1, w2, b2 = (np.array(a, dtype=np.float64, copy=True) for a in (w1, b1, w2, b2))
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    history = np.empty(max_epochs, dtype=np.float64)
    best = None
    best_mse = np.inf
    for epoch in range(max_epochs):
        mse, g1, gb1, g2, gb2 = _batch_mse_grad(w1, b1, w2, b2, X, Y)
        history[epoch] = mse
        if mse < best_mse:
            best_mse = mse
            best = (w1.copy(), b1.copy(), w2.copy(), b2.copy())
        if mse <= target_mse:
            return w1, b1, w2, b2, epoch + 1, mse, history[: epoch + 1]
        w1 -= lr * g1
        b1 -= lr * gb1
        w2 -= lr * g2
        b2 -= lr * gb2
    final = batch_mse(w1, b1, w2, b2, X, Y)
    if best_mse < final:
        w1, b1, w2, b2 = best
        final = best_mse
    return w1, b1, w2, b2, max_epochs, final, history


def sense_busy(su_xy, pu_xy, pu_channel, pu_active, range_m, num_channels):
    n = su_xy.shape[0]
    busy = np.zeros((n, num_channels), dtype=np.uint8)
    if pu_xy.shape[0] == 0 or n == 0:
        return busy
    dx = su_xy[:, 0:1] - pu_xy[None, :, 0]
    dy = su_xy[:, 1:2] - pu_xy[None, :, 1]
    hit = ((dx * dx + dy * dy) <= range_m * range_m) & (pu_active[None, :] != 0)
    for p in range(pu_xy.shape[0]):
        ch = int(pu_channel[p])
        busy[:, ch] |= hit[:, p]
    return busy


def adjacency(xy, range_m):
    dx = xy[:, 0:1] - xy[None, :, 0]
    dy = xy[:, 1:2] - xy[None, :, 1]
    adj = ((dx * dx + dy * dy) <= range_m * range_m).astype(np.uint8)
    np.fill_diagonal(adj, 0)
    return adj


def window_features(times_ms, busy, start, end, now_ms, window_ms):
    """Per-channel (busy_fraction, time_since_busy_s, mean_idle_run_s).

    ``times_ms[start:end]`` are sample instants in ms, ``busy[c, start:end]``
    the sensed flags. Only samples with ``t >= now_ms - window_ms`` count.
    """
    n_ch = busy.shape[0]
    out = np.empty((n_ch, 3), dtype=np.float64)
    t = np.asarray(times_ms[start:end], dtype=np.int64)
    lo = int(np.searchsorted(t, now_ms - window_ms, side="left"))
    t = t[lo:]
    n = t.shape[0]
    w_s = window_ms / 1000.0
    if n == 0:
        out[:, 0] = 0.0
        out[:, 1] = w_s
        out[:, 2] = w_s
        return out
    b = np.asarray(busy[:, start + lo : end], dtype=bool)
    for c in range(n_ch):
        bc = b[c]
        nb = int(np.count_nonzero(bc))
        out[c, 0] = nb / n
        if nb:
            last = int(t[np.flatnonzero(bc)[-1]])
            out[c, 1] = (now_ms - last) / 1000.0
        else:
            out[c, 1] = w_s
        idle = ~bc
        # run starts: idle sample preceded by busy (or first sample)
        starts = np.flatnonzero(idle & np.concatenate(([True], bc[:-1])))
        runs = starts.shape[0]
        if runs == 0:
            out[c, 2] = 0.0
            continue
        # run ends at the next busy sample, the trailing run at now
        busy_idx = np.flatnonzero(bc)
        next_busy = np.append(t[busy_idx], np.int64(now_ms))
        ends = next_busy[np.searchsorted(busy_idx, starts)]
        total = int(np.sum(ends - t[starts]))
        out[c, 2] = (total / runs) / 1000.0
    return out
