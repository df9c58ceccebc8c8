"""numba @njit kernels; same contracts and accumulation order as _numpy."""

import numpy as np
from numba import njit


@njit(cache=True)
def _gemm(w, x):
    o, k = w.shape
    m = x.shape[1]
    out = np.zeros((o, m), dtype=np.float32)
    for i in range(o):
        for j in range(m):
            acc = np.float32(0.0)
            for t in range(k):
                acc += w[i, t] * x[t, j]
            out[i, j] = acc
    return out


@njit(cache=True)
def _gemv(w, x):
    o, k = w.shape
    out = np.zeros(o, dtype=np.float32)
    for i in range(o):
        acc = np.float32(0.0)
        for t in range(k):
            acc += w[i, t] * x[t]
        out[i] = acc
    return out


@njit(cache=True)
def _condensed_gemv(w, x, winners):
    o = w.shape[0]
    out = np.zeros(o, dtype=np.float32)
    for i in range(o):
        acc = np.float32(0.0)
        for t in range(winners.size):
            kk = winners[t]
            acc += w[i, kk] * x[kk]
        out[i] = acc
    return out


@njit(cache=True)
def _condensed_gemm(w, x, winners):
    o = w.shape[0]
    m = x.shape[1]
    out = np.zeros((o, m), dtype=np.float32)
    for i in range(o):
        for j in range(m):
            acc = np.float32(0.0)
            for t in range(winners.size):
                kk = winners[t]
                acc += w[i, kk] * x[kk, j]
            out[i, j] = acc
    return out


@njit(cache=True)
def _im2col_channels(fm, channels, f, stride, pad, h_out, w_out):
    out = np.empty((f * f * channels.size, h_out * w_out), dtype=np.float32)
    h, w, _ = fm.shape
    row = 0
    for ci in range(channels.size):
        c = channels[ci]
        for fi in range(f):
            for fj in range(f):
                col = 0
                for oi in range(h_out):
                    si = oi * stride + fi - pad
                    for oj in range(w_out):
                        sj = oj * stride + fj - pad
                        if 0 <= si < h and 0 <= sj < w:
                            out[row, col] = fm[si, sj, c]
                        else:
                            out[row, col] = np.float32(0.0)
                        col += 1
                row += 1
    return out


def gemm_ordered(w, x):
    return _gemm(w, x)


def gemv_ordered(w, x):
    return _gemv(w, x)


def condensed_gemv(w, x, winners):
    return _condensed_gemv(w, x, np.asarray(winners, dtype=np.int64))


def condensed_gemm(w, x, winners):
    return _condensed_gemm(w, x, np.asarray(winners, dtype=np.int64))


def im2col_channels(fm, channels, f, stride, pad):
    from ..errors import ShapeMismatchError

    h, w, _ = fm.shape
    h_out = (h + 2 * pad - f) // stride + 1
    w_out = (w + 2 * pad - f) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeMismatchError(
            f"non-positive output dims for fm {fm.shape}, F={f}, "
            f"stride={stride}, pad={pad}"
        )
    return _im2col_channels(
        fm, np.asarray(channels, dtype=np.int64), f, stride, pad, h_out, w_out
    )
