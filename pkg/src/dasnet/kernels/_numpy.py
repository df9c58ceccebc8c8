"""Pure-numpy reference kernels.

Every accumulation runs in ascending input-index order, so the condensed
variants reproduce the dense-on-masked-input result bitwise (modulo
signed zeros).  These are the fallback when numba is unavailable and the
oracle the numba kernels are checked against.
"""

import numpy as np

from ..errors import ShapeMismatchError


def gemm_ordered(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(O, K) @ (K, M) with the k-loop ascending."""
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"inner dims differ: {w.shape} vs {x.shape}")
    o, k = w.shape
    out = np.zeros((o, x.shape[1]), dtype=np.float32)
    for i in range(k):
        out += w[:, i : i + 1] * x[i : i + 1, :]
    return out


def gemv_ordered(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"inner dims differ: {w.shape} vs {x.shape}")
    out = np.zeros(w.shape[0], dtype=np.float32)
    for i in range(x.shape[0]):
        out += w[:, i] * x[i]
    return out


def condensed_gemv(w: np.ndarray, x: np.ndarray, winners: np.ndarray) -> np.ndarray:
    """Dense gemv restricted to winner rows of x (ascending index order)."""
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"inner dims differ: {w.shape} vs {x.shape}")
    out = np.zeros(w.shape[0], dtype=np.float32)
    for i in winners:
        out += w[:, i] * x[i]
    return out


def condensed_gemm(w: np.ndarray, x: np.ndarray, winners: np.ndarray) -> np.ndarray:
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"inner dims differ: {w.shape} vs {x.shape}")
    out = np.zeros((w.shape[0], x.shape[1]), dtype=np.float32)
    for i in winners:
        out += w[:, i : i + 1] * x[i : i + 1, :]
    return out


def im2col_channels(
    fm: np.ndarray, channels: np.ndarray, f: int, stride: int, pad: int
) -> np.ndarray:
    """Unroll conv windows of the given channels into a matrix.

    Rows are grouped channel-major: the F*F window offsets of channel
    channels[0] first, then channels[1], ...  Output shape is
    (F*F*len(channels), H_out*W_out).
    """
    h, w, _ = fm.shape
    h_out = (h + 2 * pad - f) // stride + 1
    w_out = (w + 2 * pad - f) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeMismatchError(
            f"non-positive output dims for fm {fm.shape}, F={f}, "
            f"stride={stride}, pad={pad}"
        )
    padded = np.pad(fm, ((pad, pad), (pad, pad), (0, 0)))
    out = np.empty((f * f * len(channels), h_out * w_out), dtype=np.float32)
    row = 0
    for c in channels:
        for fi in range(f):
            for fj in range(f):
                patch = padded[
                    fi : fi + stride * h_out : stride,
                    fj : fj + stride * w_out : stride,
                    c,
                ]
                out[row] = patch.ravel()
                row += 1
    return out
