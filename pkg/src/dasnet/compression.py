"""Composition with classic model compression: symmetric 8-bit linear
weight quantization (one shot, weights only) and per-layer magnitude
pruning of fc weights."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .nn import Network
from .wta import partial_select_top_k


@dataclass
class QuantizedLayer:
    """int8 weight codes with one float32 scale; zero point fixed at 0."""

    codes: np.ndarray
    scale: float

    def dequantize(self) -> np.ndarray:
        return self.codes.astype(np.float32) * np.float32(self.scale)


@dataclass
class QuantizedNetwork:
    network: Network  # weights hold the dequantized values
    layers: list


def quantize_weights_linear8(net: Network) -> QuantizedNetwork:
    """Per-layer symmetric quantization: scale = max|w| / 127,
    codes = round(w / scale).  Biases and activations stay float32."""
    qlayers = []
    qnet = net.copy()
    for i, w in enumerate(net.weights):
        peak = float(np.abs(w).max())
        if peak == 0.0:
            raise DegenerateInputError(
                f"layer {net.specs[i].name}: all-zero weights, scale undefined"
            )
        scale = peak / 127.0
        codes = np.clip(np.round(w / scale), -127, 127).astype(np.int8)
        ql = QuantizedLayer(codes, scale)
        qlayers.append(ql)
        qnet.weights[i] = ql.dequantize().reshape(w.shape)
    return QuantizedNetwork(qnet, qlayers)


def magnitude_prune_fc(net: Network, density_target: float) -> Network:
    """Zero the smallest-magnitude fc weights per layer until at most
    density_target of them remain; the keep-mask is recorded on the
    network so finetuning (sgd_step) cannot revive pruned weights."""
    if not 0.0 < density_target <= 1.0:
        raise ValueError(f"density must be in (0, 1], got {density_target}")
    pruned = net.copy()
    for i, spec in enumerate(net.specs):
        if spec.kind != "fc":
            continue
        w = pruned.weights[i]
        n = w.size
        keep_count = min(n, math.floor(density_target * n + 1e-9))
        keep_idx = partial_select_top_k(w.ravel(), keep_count)
        keep = np.zeros(n, dtype=np.float32)
        keep[keep_idx] = 1.0
        keep = keep.reshape(w.shape)
        pruned.weights[i] = w * keep
        pruned.prune_masks[i] = keep
    return pruned
