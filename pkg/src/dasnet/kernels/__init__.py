"""Hot GEMM / im2col kernels with backend dispatch.

Public functions validate shapes, then delegate to the backend module
chosen by dasnet.backend (numba @njit loops, or the pure-numpy
fallback).  Both backends accumulate in ascending input-index order so
condensed results match dense-on-masked-input bitwise.
"""

import numpy as np

from ..backend import active_backend
from ..errors import ShapeMismatchError
from ..wta import WtaMask
from . import _numpy


def get_impl(backend: str | None = None):
    """Return the kernel module for a backend name (default: active)."""
    name = backend or active_backend()
    if name == "numpy":
        return _numpy
    from . import _numba

    return _numba


def _check_inner(w, x):
    if w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"inner dims differ: {w.shape} vs {x.shape}")


def _f32(a):
    return np.ascontiguousarray(a, dtype=np.float32)


def dense_gemm(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(O, K) @ (K, M); fixed ascending-k accumulation."""
    w, x = _f32(w), _f32(x)
    _check_inner(w, x)
    if x.ndim == 1:
        return get_impl().gemv_ordered(w, x)
    return get_impl().gemm_ordered(w, x)


def condensed_gemm(w: np.ndarray, x: np.ndarray, mask: WtaMask) -> np.ndarray:
    """dense_gemm over only the winner rows of x (and matching columns
    of w); MAC count is |winners| * O per output column."""
    w, x = _f32(w), _f32(x)
    _check_inner(w, x)
    if mask.total != x.shape[0]:
        raise ShapeMismatchError(
            f"mask covers {mask.total} rows, x has {x.shape[0]}"
        )
    impl = get_impl()
    if x.ndim == 1:
        return impl.condensed_gemv(w, x, mask.winner_indices)
    return impl.condensed_gemm(w, x, mask.winner_indices)


def im2col(fm: np.ndarray, f: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Full unroll: (F*F*C, H_out*W_out), rows grouped channel-major."""
    fm = _f32(fm)
    return get_impl().im2col_channels(
        fm, np.arange(fm.shape[2], dtype=np.int64), f, stride, pad
    )


def im2col_masked(
    fm: np.ndarray, mask: WtaMask, f: int, stride: int = 1, pad: int = 0
) -> np.ndarray:
    """im2col restricted to winner channels: (F*F*|winners|, H_out*W_out)."""
    fm = _f32(fm)
    if mask.total != fm.shape[2]:
        raise ShapeMismatchError(
            f"mask covers {mask.total} channels, fm has {fm.shape[2]}"
        )
    return get_impl().im2col_channels(fm, mask.winner_indices, f, stride, pad)


def conv_filter_matrix(filters: np.ndarray) -> np.ndarray:
    """(N, F, F, C) filters flattened to (N, C*F*F) matching im2col rows."""
    n, f, _, c = filters.shape
    return _f32(filters.transpose(0, 3, 1, 2).reshape(n, c * f * f))


def gather_filter_columns(wmat: np.ndarray, mask: WtaMask, f: int) -> np.ndarray:
    """Columns of the flattened filter matrix for winner channels only."""
    cols = (
        mask.winner_indices[:, None] * (f * f) + np.arange(f * f)[None, :]
    ).ravel()
    return np.ascontiguousarray(wmat[:, cols])
