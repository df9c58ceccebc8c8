"""Versioned binary checkpoints.

Layout: magic "DASN", version byte, flags byte (bit0: 8-bit weight
payload, bit1: per-layer float64 winner rates appended), network name, seed,
epoch counter, per-layer shape descriptors, then little-endian payloads
(float32 weights/biases, or int8 codes with a float32 scale when the
quantized flag is set).
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError, MissingArtifactError
from .nn import LayerSpec, Network

MAGIC = b"DASN"
VERSION = 1
FLAG_QUANTIZED = 1
FLAG_RATES = 2

_KINDS = {"fc": 0, "conv": 1}
_KINDS_INV = {v: k for k, v in _KINDS.items()}


def _pack_spec(spec: LayerSpec) -> bytes:
    if spec.kind == "fc":
        a, b = spec.in_features, spec.out_features
    else:
        a, b = spec.in_channels, spec.out_channels
    return struct.pack(
        "<BBBBIIII",
        _KINDS[spec.kind],
        1 if spec.activation == "relu" else 0,
        1 if spec.wta_eligible else 0,
        1 if spec.pool else 0,
        a,
        b,
        spec.filter_size,
        spec.pad,
    )


def _unpack_spec(buf: bytes, name: str) -> LayerSpec:
    kind, act, eligible, pool, a, b, f, pad = struct.unpack("<BBBBIIII", buf)
    kind = _KINDS_INV[kind]
    spec = LayerSpec(
        kind,
        name,
        activation="relu" if act else "none",
        wta_eligible=bool(eligible),
    )
    if kind == "fc":
        spec.in_features, spec.out_features = a, b
    else:
        spec.in_channels, spec.out_channels = a, b
        spec.filter_size, spec.pad, spec.pool = f, pad, bool(pool)
    return spec


def save(net: Network, path, quantized_layers=None):
    """Write a checkpoint; pass quantized layer codes for an 8-bit payload."""
    # float64: the exact rate decides the winner count via a ceiling,
    # so a float32 roundtrip could shift masks by one winner
    rates = [
        float(s.wta_rate) if s.wta_rate is not None else float("nan")
        for s in net.specs
    ]
    has_rates = any(not np.isnan(r) for r in rates)
    flags = (FLAG_QUANTIZED if quantized_layers else 0) | (
        FLAG_RATES if has_rates else 0
    )
    name = net.name.encode()
    parts = [
        MAGIC,
        struct.pack("<BBH", VERSION, flags, len(name)),
        name,
        struct.pack("<QIH", net.seed, net.epochs_completed, len(net.specs)),
    ]
    for spec in net.specs:
        parts.append(_pack_spec(spec))
    for i, spec in enumerate(net.specs):
        if quantized_layers:
            ql = quantized_layers[i]
            parts.append(struct.pack("<f", ql.scale))
            parts.append(ql.codes.astype("<i1").tobytes())
        else:
            parts.append(net.weights[i].astype("<f4").tobytes())
        parts.append(net.biases[i].astype("<f4").tobytes())
    if has_rates:
        parts.append(np.array(rates, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _weight_shape(spec: LayerSpec):
    if spec.kind == "fc":
        return (spec.out_features, spec.in_features)
    return (spec.out_channels, spec.filter_size, spec.filter_size,
            spec.in_channels)


def load(path) -> Network:
    """Read a checkpoint back into a Network (8-bit payloads are
    dequantized to float32 on the fly)."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {buf[:4]!r}")
    version, flags, name_len = struct.unpack("<BBH", buf[4:8])
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    off = 8
    name = buf[off : off + name_len].decode()
    off += name_len
    seed, epochs, n_layers = struct.unpack("<QIH", buf[off : off + 14])
    off += 14
    specs = []
    counts = {"fc": 0, "conv": 0}
    spec_size = struct.calcsize("<BBBBIIII")
    for _ in range(n_layers):
        kind_byte = buf[off]
        kind = _KINDS_INV[kind_byte]
        counts[kind] += 1
        specs.append(
            _unpack_spec(buf[off : off + spec_size], f"{kind}{counts[kind]}")
        )
        off += spec_size
    quantized = bool(flags & FLAG_QUANTIZED)
    weights, biases = [], []
    for spec in specs:
        shape = _weight_shape(spec)
        n_w = int(np.prod(shape))
        if quantized:
            (scale,) = struct.unpack("<f", buf[off : off + 4])
            off += 4
            codes = np.frombuffer(buf[off : off + n_w], dtype="<i1")
            off += n_w
            w = (codes.astype(np.float32) * scale).reshape(shape)
        else:
            w = np.frombuffer(buf[off : off + 4 * n_w], dtype="<f4").reshape(shape)
            off += 4 * n_w
        n_b = shape[0]
        b = np.frombuffer(buf[off : off + 4 * n_b], dtype="<f4")
        off += 4 * n_b
        weights.append(w.copy())
        biases.append(b.copy())
    from .nn import ARCHITECTURES

    input_shape = ARCHITECTURES[name]["input_shape"]
    net = Network(name, input_shape, specs, weights, biases, seed, epochs)
    if flags & FLAG_RATES:
        rates = np.frombuffer(buf[off : off + 8 * n_layers], dtype="<f8")
        off += 8 * n_layers
        for spec, rate in zip(net.specs, rates):
            if not np.isnan(rate):
                spec.wta_rate = float(rate)
    if off != len(buf):
        raise DataFormatError(
            f"{path}: {len(buf) - off} trailing bytes at offset {off}"
        )
    return net
