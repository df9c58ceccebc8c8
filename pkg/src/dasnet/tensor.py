"""Dense tensor primitives.

Tensors are plain float32 numpy arrays in row-major order.  Feature maps
are rank-3 tensors with channel-last (H, W, C) layout, so per-channel
reductions stride by C and dropping a channel drops a contiguous block
of im2col rows.
"""

import numpy as np

from .errors import ShapeMismatchError


def as_tensor(values, shape=None) -> np.ndarray:
    """Coerce to a float32, C-contiguous array; optionally reshape."""
    t = np.ascontiguousarray(values, dtype=np.float32)
    if shape is not None:
        t = t.reshape(shape)
    if t.ndim == 0:
        t = t.reshape(1)
    return t


def check_feature_map(fm: np.ndarray) -> np.ndarray:
    if fm.ndim != 3:
        raise ShapeMismatchError(
            f"feature map must be rank-3 (H, W, C), got shape {fm.shape}"
        )
    return fm


def relu(t: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x); shape and dtype preserved."""
    return np.maximum(t, 0)


def channel_slice(fm: np.ndarray, j: int) -> np.ndarray:
    """The H×W plane of channel j.  Raises IndexError when j is out of range."""
    check_feature_map(fm)
    c = fm.shape[2]
    if not 0 <= j < c:
        raise IndexError(f"channel {j} out of range for C={c}")
    return fm[:, :, j]
