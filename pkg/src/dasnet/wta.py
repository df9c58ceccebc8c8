"""Run-time winners-take-all selection.

Ranking keys are post-ReLU activation magnitudes.  Winner counts round
up (ceil(p * N)), so any positive rate keeps at least one winner.  Ties
break toward the lower index, which keeps every selection deterministic
and lets the tests compare against a full-sort oracle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ShapeMismatchError
from .tensor import check_feature_map


@dataclass(frozen=True)
class WtaMask:
    """A layer's winner set.

    winner_indices are strictly increasing positions into the masked
    axis; winner_rate is |winners| / total (never 0: a mask always keeps
    at least one winner).
    """

    layer_id: str
    winner_indices: np.ndarray
    total: int
    winner_rate: float = field(init=False)

    def __post_init__(self):
        idx = np.asarray(self.winner_indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("a WTA mask must keep at least one winner")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("winner indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.total:
            raise ValueError("winner index out of range")
        object.__setattr__(self, "winner_indices", idx)
        object.__setattr__(self, "winner_rate", idx.size / self.total)

    def as_dense(self) -> np.ndarray:
        """Binary 0/1 vector of length total (the mask seen by backprop)."""
        dense = np.zeros(self.total, dtype=np.float32)
        dense[self.winner_indices] = 1.0
        return dense


@dataclass(frozen=True)
class FeatureVector:
    """Per-channel importance scores for a feature map."""

    scores: np.ndarray
    mode: str  # "max" | "mean"


def winner_count(rate: float, total: int) -> int:
    """ceil(rate * total); validates rate in (0, 1]."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"winner rate must be in (0, 1], got {rate}")
    return max(1, min(total, math.ceil(rate * total - 1e-9)))


def partial_select_top_k(values, k: int) -> np.ndarray:
    """Indices of the k largest-magnitude entries, sorted ascending.

    Selection-based (np.partition introselect), expected linear time;
    ties at the cut break toward the lower index.
    """
    v = np.abs(np.asarray(values).ravel())
    n = v.size
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range for n={n}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k == n:
        return np.arange(n, dtype=np.int64)
    cut = np.partition(v, n - k)[n - k]
    above = np.flatnonzero(v > cut)
    need = k - above.size
    at_cut = np.flatnonzero(v == cut)[:need]
    return np.sort(np.concatenate([above, at_cut])).astype(np.int64)


def top_k_rows(values: np.ndarray, k: int) -> np.ndarray:
    """Batched boolean top-k by magnitude along axis 1, same tie rule."""
    v = np.abs(values)
    n = v.shape[1]
    if k >= n:
        return np.ones_like(v, dtype=bool)
    cut = np.partition(v, n - k, axis=1)[:, n - k : n - k + 1]
    above = v > cut
    need = k - above.sum(axis=1, keepdims=True)
    at_cut = v == cut
    keep_at_cut = at_cut & (np.cumsum(at_cut, axis=1) <= need)
    return above | keep_at_cut


def cumulative_energy_count(energies_desc: np.ndarray, theta: float) -> int:
    """Minimal k with sum of the first k energies >= theta * total.

    Expects nonnegative energies sorted descending.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    csum = np.cumsum(energies_desc, dtype=np.float64)
    total = csum[-1]
    if total <= 0.0:
        raise DegenerateInputError("total energy is zero; cutoff undefined")
    k = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return min(k, energies_desc.size)


def winner_count_by_energy(values, theta: float) -> int:
    """Minimal k such that the top-k squared magnitudes reach theta of
    the total squared magnitude."""
    v = np.asarray(values, dtype=np.float64).ravel()
    energies = np.sort(v * v)[::-1]
    return cumulative_energy_count(energies, theta)


def make_fc_mask(activations, rate: float, layer_id: str = "fc") -> WtaMask:
    """Mask over a rank-1 activation vector keeping the ceil(rate*N)
    largest magnitudes."""
    a = np.asarray(activations).ravel()
    k = winner_count(rate, a.size)
    return WtaMask(layer_id, partial_select_top_k(a, k), a.size)


def feature_vector(fm: np.ndarray, mode: str = "max") -> FeatureVector:
    """Per-channel max or mean over the spatial plane (Fig. 4 step one)."""
    check_feature_map(fm)
    if mode == "max":
        scores = fm.max(axis=(0, 1))
    elif mode == "mean":
        scores = fm.mean(axis=(0, 1))
    else:
        raise ValueError(f"mode must be 'max' or 'mean', got {mode!r}")
    return FeatureVector(np.asarray(scores), mode)


def make_conv_mask(
    fm: np.ndarray, rate: float, mode: str = "max", layer_id: str = "conv"
) -> WtaMask:
    """Two-step conv selection: channel scores, then top-k over channels."""
    fv = feature_vector(fm, mode)
    c = fv.scores.size
    k = winner_count(rate, c)
    return WtaMask(layer_id, partial_select_top_k(fv.scores, k), c)


def apply_mask(t: np.ndarray, mask: WtaMask, axis: int = -1) -> np.ndarray:
    """Zero out non-winner positions along axis; winners pass bitwise."""
    t = np.asarray(t)
    axis = axis % t.ndim
    if t.shape[axis] != mask.total:
        raise ShapeMismatchError(
            f"axis {axis} has size {t.shape[axis]}, mask expects {mask.total}"
        )
    out = np.zeros_like(t)
    src = np.take(t, mask.winner_indices, axis=axis)
    index = [slice(None)] * t.ndim
    index[axis] = mask.winner_indices
    out[tuple(index)] = src
    return out
