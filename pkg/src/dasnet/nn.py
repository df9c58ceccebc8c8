"""Reference networks, masked forward/backward, and finetuning.

Three small classifiers (MLP-3, LeNet-4, ConvNet-5) trained with plain
SGD and softmax cross-entropy.  WTA masks are recomputed per input at
run time from the frozen per-layer winner rate; during finetuning the
forward-pass mask is reused as a constant binary factor in the backward
chain, so masked-out neurons receive no error and contribute no weight
update for that sample.

Layer order: linear -> ReLU -> WTA mask -> (2x2 max-pool for conv).
The output layer is never masked; input data is never masked.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatchError, UntrainedNetworkError
from .wta import top_k_rows, winner_count


@dataclass
class LayerSpec:
    kind: str  # "conv" | "fc"
    name: str
    activation: str = "relu"  # "relu" | "none"
    wta_eligible: bool = True
    wta_rate: float | None = None
    # fc geometry
    in_features: int = 0
    out_features: int = 0
    # conv geometry (stride 1, square filters)
    filter_size: int = 0
    in_channels: int = 0
    out_channels: int = 0
    pad: int = 0
    pool: bool = False


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    dropout_rate: float = 0.5  # baseline training only; off during finetune
    fv_mode: str = "max"
    early_stop: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")


@dataclass
class Network:
    name: str
    input_shape: tuple
    specs: list
    weights: list
    biases: list
    seed: int
    epochs_completed: int = 0
    # boolean keep-masks from fc weight pruning; enforced by sgd_step
    prune_masks: dict = field(default_factory=dict)

    def layer_index(self, layer_id: str) -> int:
        for i, spec in enumerate(self.specs):
            if spec.name == layer_id:
                return i
        raise KeyError(f"no layer named {layer_id!r}")

    def copy(self) -> "Network":
        return Network(
            self.name,
            self.input_shape,
            [replace(s) for s in self.specs],
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            self.epochs_completed,
            {k: v.copy() for k, v in self.prune_masks.items()},
        )

    def astype(self, dtype) -> "Network":
        net = self.copy()
        net.weights = [w.astype(dtype) for w in net.weights]
        net.biases = [b.astype(dtype) for b in net.biases]
        return net

    def set_rates(self, rates: dict):
        """Freeze calibrated winner rates onto the layer specs."""
        for spec in self.specs:
            if spec.name in rates and rates[spec.name] is not None:
                if not spec.wta_eligible:
                    raise ValueError(f"layer {spec.name} cannot carry a mask")
                spec.wta_rate = float(rates[spec.name])

    def rates(self) -> dict:
        return {s.name: s.wta_rate for s in self.specs if s.wta_eligible}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Named RNG stream: independent draws per purpose from one seed."""
    import zlib

    return np.random.default_rng([seed, zlib.crc32(name.encode())])


ARCHITECTURES = {
    "mlp3": {
        "input_shape": (784,),
        "layers": [
            ("fc", 784, 300),
            ("fc", 300, 100),
            ("fc", 100, 10),
        ],
    },
    "lenet4": {
        "input_shape": (28, 28, 1),
        "layers": [
            ("conv", 1, 32),
            ("conv", 32, 64),
            ("fc", 3136, 1024),
            ("fc", 1024, 10),
        ],
    },
    "convnet5": {
        "input_shape": (24, 24, 3),
        "layers": [
            ("conv", 3, 64),
            ("conv", 64, 64),
            ("fc", 2304, 384),
            ("fc", 384, 192),
            ("fc", 192, 10),
        ],
    },
}


def build_network(name: str, seed: int = 0) -> Network:
    """Construct one of the reference networks with He-normal weights."""
    key = name.lower().replace("-", "")
    if key not in ARCHITECTURES:
        raise ValueError(
            f"unknown network {name!r}; choose from {sorted(ARCHITECTURES)}"
        )
    arch = ARCHITECTURES[key]
    rng = rng_stream(seed, "init")
    specs, weights, biases = [], [], []
    counts = {"conv": 0, "fc": 0}
    n_layers = len(arch["layers"])
    for i, (kind, c_in, c_out) in enumerate(arch["layers"]):
        counts[kind] += 1
        layer_name = f"{kind}{counts[kind]}"
        last = i == n_layers - 1
        if kind == "conv":
            f = 5
            fan_in = f * f * c_in
            w = rng.normal(0.0, math.sqrt(2.0 / fan_in), (c_out, f, f, c_in))
            specs.append(
                LayerSpec(
                    "conv",
                    layer_name,
                    filter_size=f,
                    in_channels=c_in,
                    out_channels=c_out,
                    pad=2,
                    pool=True,
                )
            )
        else:
            w = rng.normal(0.0, math.sqrt(2.0 / c_in), (c_out, c_in))
            specs.append(
                LayerSpec(
                    "fc",
                    layer_name,
                    activation="none" if last else "relu",
                    wta_eligible=not last,
                    in_features=c_in,
                    out_features=c_out,
                )
            )
        weights.append(w.astype(np.float32))
        biases.append(np.zeros(c_out, dtype=np.float32))
    return Network(key, arch["input_shape"], specs, weights, biases, seed)


# ---------------------------------------------------------------------------
# forward / backward


def _conv2d(x, w, b, pad):
    """Stride-1 2-D convolution, channel-last, via shifted slices."""
    bsz, h, wd, _ = x.shape
    n, f, _, _ = w.shape
    h_out = h + 2 * pad - f + 1
    w_out = wd + 2 * pad - f + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    z = np.zeros((bsz, h_out, w_out, n), dtype=x.dtype)
    for fi in range(f):
        for fj in range(f):
            z += xp[:, fi : fi + h_out, fj : fj + w_out, :] @ w[:, fi, fj, :].T
    return z + b, xp


def _conv2d_backward(dz, xp, w, pad, in_shape):
    bsz, h, wd, _ = in_shape
    n, f, _, _ = w.shape
    h_out, w_out = dz.shape[1], dz.shape[2]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for fi in range(f):
        for fj in range(f):
            patch = xp[:, fi : fi + h_out, fj : fj + w_out, :]
            dw[:, fi, fj, :] = np.tensordot(dz, patch, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, fi : fi + h_out, fj : fj + w_out, :] += dz @ w[:, fi, fj, :]
    db = dz.sum(axis=(0, 1, 2))
    dx = dxp[:, pad : pad + h, pad : pad + wd, :]
    return dw, db, dx


def _maxpool2(a):
    """2x2/stride-2 max pool; returns output and one-hot switch tensor."""
    bsz, h, w, c = a.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"pooling needs even spatial dims, got {a.shape}")
    r = a.reshape(bsz, h // 2, 2, w // 2, 2, c)
    flat = r.transpose(0, 1, 3, 5, 2, 4).reshape(bsz, h // 2, w // 2, c, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    switches = np.zeros(flat.shape, dtype=bool)
    np.put_along_axis(switches, idx[..., None], True, axis=-1)
    return out, switches


def _maxpool2_backward(dout, switches):
    dflat = switches * dout[..., None]
    bsz, h2, w2, c, _ = dflat.shape
    da = dflat.reshape(bsz, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return da.reshape(bsz, h2 * 2, w2 * 2, c)


def _batch_conv_fv(a_o, mode):
    if mode == "max":
        return a_o.max(axis=(1, 2))
    if mode == "mean":
        return a_o.mean(axis=(1, 2))
    raise ValueError(f"mode must be 'max' or 'mean', got {mode!r}")


def forward_batch(
    net,
    x,
    use_masks: bool,
    fv_mode: str = "max",
    frozen_masks=None,
    dropout_rate: float = 0.0,
    dropout_rng=None,
):
    """Run the network on a batch; returns (logits, per-layer caches).

    Each cache holds the layer input, pre-activation z, post-activation
    a_o, the binary mask actually applied (or None), the post-mask a_w,
    and pooling switches for conv layers.  `frozen_masks` (one entry per
    layer, None where unmasked) bypasses re-ranking: used by the
    gradient-check oracle.
    """
    x = np.asarray(x)
    if x.shape[1:] != tuple(net.input_shape):
        if x.ndim == 2 and x.shape[1] == int(np.prod(net.input_shape)):
            x = x.reshape((-1,) + tuple(net.input_shape))
        else:
            raise ShapeMismatchError(
                f"input shape {x.shape[1:]} does not match {net.input_shape}"
            )
    out = x
    caches = []
    for i, spec in enumerate(net.specs):
        cache = {"spec": spec}
        if spec.kind == "fc":
            if out.ndim > 2:
                out = out.reshape(out.shape[0], -1)
            if out.shape[1] != spec.in_features:
                raise ShapeMismatchError(
                    f"{spec.name}: expected {spec.in_features} inputs, "
                    f"got {out.shape[1]}"
                )
            cache["x_in"] = out
            z = out @ net.weights[i].T + net.biases[i]
        else:
            cache["x_in"] = out
            z, xp = _conv2d(out, net.weights[i], net.biases[i], spec.pad)
            cache["x_pad"] = xp
        cache["z"] = z
        a_o = np.maximum(z, 0) if spec.activation == "relu" else z
        cache["a_o"] = a_o

        mask = None
        if frozen_masks is not None and frozen_masks[i] is not None:
            mask = frozen_masks[i]
        elif use_masks and spec.wta_eligible and spec.wta_rate is not None:
            if spec.kind == "fc":
                k = winner_count(spec.wta_rate, spec.out_features)
                mask = top_k_rows(a_o, k).astype(a_o.dtype)
            else:
                fv = _batch_conv_fv(a_o, fv_mode)
                k = winner_count(spec.wta_rate, spec.out_channels)
                mask = top_k_rows(fv, k).astype(a_o.dtype)
        cache["mask"] = mask
        if mask is None:
            a_w = a_o
        elif spec.kind == "fc":
            a_w = a_o * mask
        else:
            a_w = a_o * mask[:, None, None, :]
        cache["a_w"] = a_w

        out = a_w
        if spec.kind == "conv" and spec.pool:
            out, switches = _maxpool2(out)
            cache["switches"] = switches
        if (
            dropout_rate > 0.0
            and spec.kind == "fc"
            and spec.wta_eligible
        ):
            keep = (
                dropout_rng.random(out.shape) >= dropout_rate
            ).astype(out.dtype) / (1.0 - dropout_rate)
            cache["dropout"] = keep
            out = out * keep
        cache["out"] = out
        caches.append(cache)
    return out, caches


def forward(net, x, use_masks: bool = True, fv_mode: str = "max"):
    """Single-input forward pass; returns (logits, caches)."""
    logits, caches = forward_batch(
        net, np.asarray(x)[None, ...], use_masks, fv_mode=fv_mode
    )
    return logits[0], caches


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient wrt logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = np.finfo(probs.dtype).tiny
    loss = -np.log(probs[np.arange(n), labels] + eps).mean()
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def backward_batch(net, caches, labels):
    """Gradients of the softmax cross-entropy via Algorithm-style
    backprop: cached WTA masks re-applied as constant binary factors,
    never re-ranked."""
    if not caches:
        raise UntrainedNetworkError("missing forward cache")
    labels = np.asarray(labels)
    logits = caches[-1]["out"]
    loss, d_out = softmax_cross_entropy(logits, labels)
    grads = [None] * len(net.specs)
    for i in reversed(range(len(net.specs))):
        spec = net.specs[i]
        cache = caches[i]
        d = d_out
        if "dropout" in cache:
            d = d * cache["dropout"]
        if spec.kind == "conv" and spec.pool:
            d = _maxpool2_backward(d, cache["switches"])
        mask = cache["mask"]
        if mask is not None:
            d = d * (mask if spec.kind == "fc" else mask[:, None, None, :])
        if spec.activation == "relu":
            d = d * (cache["z"] > 0)
        if spec.kind == "fc":
            dw = d.T @ cache["x_in"]
            db = d.sum(axis=0)
            d_out = d @ net.weights[i]
        else:
            dw, db, d_out = _conv2d_backward(
                d, cache["x_pad"], net.weights[i], spec.pad, cache["x_in"].shape
            )
        grads[i] = (dw, db)
        if i > 0:
            d_out = d_out.reshape(caches[i - 1]["out"].shape)
    return loss, grads


def backward(net, caches, label):
    """Single-sample wrapper around backward_batch."""
    return backward_batch(net, caches, np.asarray([label]))


def sgd_step(net, grads, lr: float):
    """In-place W <- W - lr * grad; pruned fc weights stay zero."""
    for i, (dw, db) in enumerate(grads):
        if dw.shape != net.weights[i].shape:
            raise ShapeMismatchError(
                f"gradient shape {dw.shape} != weight shape {net.weights[i].shape}"
            )
        net.weights[i] -= (lr * dw).astype(net.weights[i].dtype)
        net.biases[i] -= (lr * db).astype(net.biases[i].dtype)
        if i in net.prune_masks:
            net.weights[i] *= net.prune_masks[i]
    return net


# ---------------------------------------------------------------------------
# training loops


def _iter_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def evaluate(net, dataset, use_masks: bool = False, split: str = "test",
             fv_mode: str = "max", batch_size: int = 256) -> float:
    """Top-1 accuracy on the given split."""
    images, labels = dataset.split_arrays(split, net.input_shape)
    correct = 0
    for start in range(0, len(labels), batch_size):
        x = images[start : start + batch_size]
        y = labels[start : start + batch_size]
        logits, _ = forward_batch(net, x, use_masks, fv_mode=fv_mode)
        correct += int((logits.argmax(axis=1) == y).sum())
    return correct / max(len(labels), 1)


def _run_epochs(net, dataset, config, use_masks, dropout_rate, epochs,
                early_stop=False):
    images, labels = dataset.split_arrays("train", net.input_shape)
    train_rng = rng_stream(config.seed, "train")
    drop_rng = rng_stream(config.seed, "dropout")
    history = []
    best = None
    for _ in range(epochs):
        for idx in _iter_batches(len(labels), config.batch_size, train_rng):
            _, caches = forward_batch(
                net,
                images[idx],
                use_masks,
                fv_mode=config.fv_mode,
                dropout_rate=dropout_rate,
                dropout_rng=drop_rng,
            )
            _, grads = backward_batch(net, caches, labels[idx])
            sgd_step(net, grads, config.lr)
        net.epochs_completed += 1
        val_acc = evaluate(net, dataset, use_masks, split="val",
                           fv_mode=config.fv_mode)
        history.append(val_acc)
        if early_stop and (best is None or val_acc >= best[0]):
            best = (val_acc, [w.copy() for w in net.weights],
                    [b.copy() for b in net.biases])
    if early_stop and best is not None:
        net.weights = best[1]
        net.biases = best[2]
    return history


def train_baseline(net, dataset, config: TrainConfig):
    """Standard SGD with 50% dropout on hidden fc layers; no WTA."""
    if dataset.size("train") == 0:
        raise ValueError("empty training set")
    history = _run_epochs(
        net, dataset, config, use_masks=False,
        dropout_rate=config.dropout_rate, epochs=config.epochs,
    )
    return net, history


def finetune_dasnet(net, dataset, calibration, config: TrainConfig):
    """Algorithm-style finetuning under recomputed-per-input WTA masks.

    Winner rates come frozen from the calibration report; standard
    dropout is disabled (the WTA mask subsumes it).  Keeps the best
    validation-accuracy weights seen across the epoch budget.
    """
    if calibration is None:
        raise ValueError("finetuning requires a calibration report")
    rates = {lc.layer_id: lc.chosen_p for lc in calibration.layers}
    net.set_rates(rates)
    history = _run_epochs(
        net, dataset, config, use_masks=True, dropout_rate=0.0,
        epochs=config.epochs, early_stop=config.early_stop,
    )
    return net, history


def measure_activation_sparsity(net, dataset, split: str = "test",
                                fv_mode: str = "max",
                                batch_size: int = 256) -> dict:
    """Realized zero fractions of post-mask activations, per layer and
    aggregated.  Both denominators are reported: per-layer and
    whole-network."""
    images, _ = dataset.split_arrays(split, net.input_shape)
    totals: dict[str, list] = {}
    for start in range(0, len(images), batch_size):
        _, caches = forward_batch(
            net, images[start : start + batch_size], True, fv_mode=fv_mode
        )
        for cache in caches:
            spec = cache["spec"]
            if not spec.wta_eligible:
                continue
            a_w = cache["a_w"]
            entry = totals.setdefault(spec.name, [0, 0, spec.kind])
            entry[0] += int((a_w == 0).sum())
            entry[1] += int(a_w.size)
    report = {"layers": {}, "overall": {}}
    agg: dict[str, list] = {}
    for name, (zeros, size, kind) in totals.items():
        spec = net.specs[net.layer_index(name)]
        report["layers"][name] = {
            "kind": kind,
            "zero_fraction": zeros / size,
            "mask_pruned_fraction": (
                None if spec.wta_rate is None else 1.0 - spec.wta_rate
            ),
        }
        a = agg.setdefault(kind, [0, 0])
        a[0] += zeros
        a[1] += size
    for kind, (zeros, size) in agg.items():
        report["overall"][kind] = zeros / size
    all_zeros = sum(v[0] for v in agg.values())
    all_size = sum(v[1] for v in agg.values())
    if all_size:
        report["overall"]["all"] = all_zeros / all_size
    return report
