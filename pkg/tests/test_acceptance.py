"""Acceptance gate: ten end-to-end criteria, one pass/fail line each.

Criteria 1-4 and 10 exercise the real MNIST/CIFAR-10 pipelines and are
skipped unless DASNET_DATA_DIR provides the files; 2-4 additionally sit
in the extended tier (DASNET_EXTENDED=1).  Criteria 5-9 always run.
"""

import math

import numpy as np
import pytest

from dasnet import calibration, kernels, nn
from dasnet.compression import magnitude_prune_fc, quantize_weights_linear8
from dasnet.costs import (
    bench_layer,
    count_macs,
    ranking_cost_ratio_conv,
    ranking_cost_ratio_fc,
)
from dasnet.wta import (
    WtaMask,
    apply_mask,
    partial_select_top_k,
    winner_count_by_energy,
)


def report_line(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def weighted_pruned_fraction(net, rates, kind):
    """1 - p averaged over the masked layers of one kind, weighted by
    neuron (or channel) count."""
    total = kept = 0
    for spec in net.specs:
        if spec.kind != kind or spec.name not in rates:
            continue
        width = spec.out_features if kind == "fc" else spec.out_channels
        total += width
        kept += rates[spec.name] * width
    return 1.0 - kept / total if total else 0.0


def tune_theta(net, samples, kind, target_pruned, fv_mode="max"):
    """Largest theta whose calibrated rates prune at least the target
    fraction of the given layer kind."""
    chosen = None
    for theta in (0.99, 0.95, 0.90, 0.85, 0.80):
        kwargs = {"theta_conv": theta, "theta_fc": theta}
        rep = calibration.calibrate_network(net, samples, fv_mode=fv_mode,
                                            **kwargs)
        rates = {lc.layer_id: lc.chosen_p for lc in rep.layers}
        chosen = (theta, rep, rates)
        if weighted_pruned_fraction(net, rates, kind) >= target_pruned:
            break
    return chosen


def calib_samples(net, dataset, n, seed=0):
    images, _ = dataset.split_arrays("train", net.input_shape)
    rng = nn.rng_stream(seed, "calibration-sampling")
    return images[rng.choice(len(images), size=min(n, len(images)),
                             replace=False)]


# ---------------------------------------------------------------------------
# 1. MLP-3 / MNIST end to end


def test_criterion_1_mlp_mnist(mnist):
    net = nn.build_network("mlp3", seed=0)
    cfg = nn.TrainConfig(lr=0.1, epochs=12, batch_size=64, seed=0)
    net, _ = nn.train_baseline(net, mnist, cfg)
    baseline = nn.evaluate(net, mnist, use_masks=False)

    samples = calib_samples(net, mnist, 1000)
    theta, rep, rates = tune_theta(net, samples, "fc", 0.90)
    tuned = net.copy()
    ft = nn.TrainConfig(lr=0.01, epochs=4, batch_size=64, seed=0,
                        dropout_rate=0.0)
    tuned, _ = nn.finetune_dasnet(tuned, mnist, rep, ft)
    masked = nn.evaluate(tuned, mnist, use_masks=True)
    pruned = weighted_pruned_fraction(net, rates, "fc")
    drop = baseline - masked
    report_line(
        1,
        baseline >= 0.975 and pruned >= 0.90 and drop <= 0.010,
        f"baseline {baseline:.4f} (need >=0.975), fc pruned {pruned:.3f} "
        f"at theta={theta} (need >=0.90), finetuned drop {drop:+.4f} "
        f"(need <=0.010)",
    )


# ---------------------------------------------------------------------------
# 2. LeNet-4 / MNIST conv channel pruning (extended)


@pytest.mark.extended
def test_criterion_2_lenet_mnist(mnist):
    net = nn.build_network("lenet4", seed=0)
    cfg = nn.TrainConfig(lr=0.05, epochs=8, batch_size=64, seed=0)
    net, _ = nn.train_baseline(net, mnist, cfg)
    baseline = nn.evaluate(net, mnist, use_masks=False)

    samples = calib_samples(net, mnist, 400)
    theta, rep, rates = tune_theta(net, samples, "conv", 0.55)
    ft = nn.TrainConfig(lr=0.005, epochs=3, batch_size=64, seed=0,
                        dropout_rate=0.0)
    net, _ = nn.finetune_dasnet(net, mnist, rep, ft)
    masked = nn.evaluate(net, mnist, use_masks=True)
    pruned = weighted_pruned_fraction(net, rates, "conv")
    drop = baseline - masked
    report_line(
        2,
        baseline >= 0.990 and pruned >= 0.55 and drop <= 0.005,
        f"baseline {baseline:.4f} (need >=0.990), channels pruned "
        f"{pruned:.3f} at theta={theta} (need >=0.55), drop {drop:+.4f} "
        f"(need <=0.005)",
    )


# ---------------------------------------------------------------------------
# 3. ConvNet-5 / CIFAR-10 (extended)


@pytest.mark.extended
def test_criterion_3_convnet_cifar(cifar10):
    net = nn.build_network("convnet5", seed=0)
    cfg = nn.TrainConfig(lr=0.05, epochs=30, batch_size=64, seed=0)
    net, _ = nn.train_baseline(net, cifar10, cfg)
    baseline = nn.evaluate(net, cifar10, use_masks=False)

    samples = calib_samples(net, cifar10, 400)
    theta_fc, _, rates_fc = tune_theta(net, samples, "fc", 0.75)
    theta_conv, _, rates_conv = tune_theta(net, samples, "conv", 0.30)
    rep = calibration.calibrate_network(
        net, samples, theta_conv=theta_conv, theta_fc=theta_fc
    )
    rates = {lc.layer_id: lc.chosen_p for lc in rep.layers}
    ft = nn.TrainConfig(lr=0.005, epochs=6, batch_size=64, seed=0,
                        dropout_rate=0.0)
    net, _ = nn.finetune_dasnet(net, cifar10, rep, ft)
    masked = nn.evaluate(net, cifar10, use_masks=True)
    fc_pruned = weighted_pruned_fraction(net, rates, "fc")
    conv_pruned = weighted_pruned_fraction(net, rates, "conv")
    drop = baseline - masked
    report_line(
        3,
        baseline >= 0.80 and fc_pruned >= 0.75 and conv_pruned >= 0.30
        and drop <= 0.02,
        f"baseline {baseline:.4f} (need >=0.80), fc pruned {fc_pruned:.3f} "
        f"(need >=0.75), conv pruned {conv_pruned:.3f} (need >=0.30), "
        f"drop {drop:+.4f} (need <=0.02)",
    )


# ---------------------------------------------------------------------------
# 4. max-vs-mean feature-vector study (extended)


@pytest.mark.extended
def test_criterion_4_fv_mode_ordering(mnist):
    base = nn.build_network("lenet4", seed=0)
    cfg = nn.TrainConfig(lr=0.05, epochs=6, batch_size=64, seed=0)
    base, _ = nn.train_baseline(base, mnist, cfg)
    samples = calib_samples(base, mnist, 300)

    gaps = []
    details = []
    for theta in (0.85, 0.92, 0.99):
        rep = calibration.calibrate_network(
            base, samples, theta_conv=theta, theta_fc=theta
        )
        accs = {}
        for mode in ("max", "mean"):
            net = base.copy()
            ft = nn.TrainConfig(lr=0.005, epochs=2, batch_size=64, seed=0,
                                dropout_rate=0.0, fv_mode=mode)
            net, _ = nn.finetune_dasnet(net, mnist, rep, ft)
            accs[mode] = nn.evaluate(net, mnist, use_masks=True, fv_mode=mode)
        gaps.append(accs["max"] - accs["mean"])
        details.append(f"theta={theta}: max {accs['max']:.4f} "
                       f"vs mean {accs['mean']:.4f}")
    ordering = all(g >= -0.002 for g in gaps)
    shrinking = abs(gaps[-1]) <= abs(gaps[0]) + 0.002
    report_line(
        4,
        ordering and shrinking,
        "; ".join(details) + f"; gaps {[round(g, 4) for g in gaps]} "
        "(max >= mean - 0.002 everywhere, gap shrinks toward theta=1)",
    )


# ---------------------------------------------------------------------------
# 5. kernel equivalence oracle


def test_criterion_5_kernel_equivalence():
    rng = np.random.default_rng(50)
    worst_fc = 0.0
    for _ in range(1000):
        o = int(rng.integers(1, 32))
        k = int(rng.integers(2, 64))
        w = rng.normal(size=(o, k)).astype(np.float32)
        x = rng.normal(size=k).astype(np.float32)
        n_win = int(rng.integers(1, k + 1))
        idx = np.sort(rng.choice(k, size=n_win, replace=False))
        mask = WtaMask("m", idx, k)
        cond = kernels.condensed_gemm(w, x, mask)
        dense = kernels.dense_gemm(w, apply_mask(x, mask))
        denom = max(float(np.abs(dense).max()), 1e-3)
        worst_fc = max(worst_fc, float(np.abs(cond - dense).max()) / denom)

    worst_conv = 0.0
    for _ in range(100):
        h = int(rng.integers(3, 9))
        c = int(rng.integers(2, 8))
        n = int(rng.integers(1, 6))
        f = int(rng.choice([1, 3, 5]))
        pad = (f - 1) // 2
        fm = rng.normal(size=(h, h, c)).astype(np.float32)
        filters = rng.normal(size=(n, f, f, c)).astype(np.float32)
        n_win = int(rng.integers(1, c + 1))
        mask = WtaMask("m", np.sort(rng.choice(c, n_win, replace=False)), c)
        wmat = kernels.conv_filter_matrix(filters)
        dense = kernels.dense_gemm(
            wmat, kernels.im2col(apply_mask(fm, mask, axis=-1), f, 1, pad)
        )
        cond = kernels.dense_gemm(
            kernels.gather_filter_columns(wmat, mask, f),
            kernels.im2col_masked(fm, mask, f, 1, pad),
        )
        denom = max(float(np.abs(dense).max()), 1e-3)
        worst_conv = max(worst_conv, float(np.abs(cond - dense).max()) / denom)
    report_line(
        5,
        worst_fc <= 1e-5 and worst_conv <= 1e-4,
        f"1000 fc triples worst rel err {worst_fc:.2e} (need <=1e-5); "
        f"100 masked conv cases worst rel err {worst_conv:.2e} (need <=1e-4)",
    )


# ---------------------------------------------------------------------------
# 6. selection oracle


def sort_oracle(values, k):
    v = np.abs(np.asarray(values, dtype=np.float64))
    order = sorted(range(v.size), key=lambda i: (-v[i], i))
    return np.sort(np.array(order[:k], dtype=np.int64))


def energy_oracle(values, theta):
    e = np.sort(np.asarray(values, dtype=np.float64) ** 2)[::-1]
    acc = np.cumsum(e)
    return int(np.searchsorted(acc, theta * acc[-1] - 1e-12) + 1)


def test_criterion_6_selection_oracle():
    rng = np.random.default_rng(60)
    select_ok = energy_ok = 0
    for i in range(1000):
        n = int(rng.integers(1, 10001))
        # quantized draws force plenty of exact ties
        v = rng.integers(-6, 7, size=n).astype(np.float64) / 3.0
        k = int(rng.integers(0, n + 1))
        select_ok += int(
            np.array_equal(partial_select_top_k(v, k), sort_oracle(v, k))
        )
        if np.any(v):
            theta = float(rng.uniform(0.05, 1.0))
            energy_ok += int(
                winner_count_by_energy(v, theta) == energy_oracle(v, theta)
            )
        else:
            energy_ok += 1
    report_line(
        6,
        select_ok == 1000 and energy_ok == 1000,
        f"top-k matched sort oracle {select_ok}/1000, energy count matched "
        f"brute force {energy_ok}/1000 (need 1000/1000 each)",
    )


# ---------------------------------------------------------------------------
# 7. gradient check with frozen masks


def test_criterion_7_gradient_check():
    specs = [
        nn.LayerSpec("conv", "conv1", filter_size=3, in_channels=2,
                     out_channels=3, pad=1, pool=True, wta_rate=0.7),
        nn.LayerSpec("fc", "fc1", in_features=27, out_features=8,
                     wta_rate=0.5),
        nn.LayerSpec("fc", "fc2", activation="none", wta_eligible=False,
                     in_features=8, out_features=4),
    ]
    rng = np.random.default_rng(70)
    weights = [
        rng.normal(0, 0.5, (3, 3, 3, 2)),
        rng.normal(0, 0.5, (8, 27)),
        rng.normal(0, 0.5, (4, 8)),
    ]
    biases = [rng.normal(0, 0.1, m) for m in (3, 8, 4)]
    net = nn.Network("tiny", (6, 6, 2), specs,
                     [w.astype(np.float64) for w in weights],
                     [b.astype(np.float64) for b in biases], 0)
    x = rng.normal(size=(3, 6, 6, 2))
    y = rng.integers(0, 4, size=3)
    _, caches = nn.forward_batch(net, x, use_masks=True)
    frozen = [c["mask"] for c in caches]
    _, grads = nn.backward_batch(net, caches, y)

    def loss():
        _, cc = nn.forward_batch(net, x, use_masks=False, frozen_masks=frozen)
        return nn.softmax_cross_entropy(cc[-1]["out"], y)[0]

    eps = 1e-6
    worst = 0.0
    checked = 0
    for i in range(len(specs)):
        w = net.weights[i]
        for flat in rng.choice(w.size, size=8, replace=False):
            idx = np.unravel_index(flat, w.shape)
            orig = w[idx]
            w[idx] = orig + eps
            up = loss()
            w[idx] = orig - eps
            down = loss()
            w[idx] = orig
            numeric = (up - down) / (2 * eps)
            analytic = grads[i][0][idx]
            rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic),
                                                1e-4)
            worst = max(worst, rel)
            checked += 1
    report_line(
        7,
        worst <= 1e-3,
        f"{checked} sampled coordinates across conv/fc/output layers, worst "
        f"relative error {worst:.2e} (need <=1e-3)",
    )


# ---------------------------------------------------------------------------
# 8. cost model


def test_criterion_8_cost_model():
    fc_ref = ranking_cost_ratio_fc(300, 100, 0.2)
    conv_ref, _ = ranking_cost_ratio_conv(12, 12, 64, 5, 64, 0.7)
    refs_ok = abs(fc_ref - 0.1029) <= 1e-3 and abs(conv_ref - 0.00217) <= 1e-4

    worst = ("", 0.0)
    for name in ("mlp3", "lenet4", "convnet5"):
        net = nn.build_network(name)
        # representative calibrated rates; the ratio grows with p, so
        # these sit at the sparse end's upper bound
        rates = {s.name: (0.2 if s.kind == "fc" else 0.7)
                 for s in net.specs if s.wta_eligible}
        rep = count_macs(net, rates=rates)
        for layer in rep.layers:
            if layer.cost_ratio is not None and layer.cost_ratio > worst[1]:
                worst = (f"{name}/{layer.name}", layer.cost_ratio)
    report_line(
        8,
        refs_ok and worst[1] < 0.2,
        f"fc ratio(300,100,0.2)={fc_ref:.5f} (need 0.1029+-1e-3), conv "
        f"ratio(12,12,64,5,64,0.7)={conv_ref:.6f} (need 0.00217+-1e-4), "
        f"largest masked-layer ratio {worst[1]:.4f} at {worst[0]} (need <0.2)",
    )


# ---------------------------------------------------------------------------
# 9. wall-clock fc speedup


def test_criterion_9_wall_clock():
    rec = bench_layer({"kind": "fc", "K": 3136, "O": 1024, "name": "fc"},
                      0.2, repetitions=9, seed=0)
    ok = rec["speedup"] >= 2.0 and rec["ranking_share_of_dense"] < 0.02
    report_line(
        9,
        ok,
        f"fc 3136x1024 at p=0.2: speedup {rec['speedup']:.2f}x (need >=2x), "
        f"ranking {100 * rec['ranking_share_of_dense']:.2f}% of dense "
        f"(need <2%), median of 9 repetitions",
    )


# ---------------------------------------------------------------------------
# 10. composition with quantization and weight pruning


def test_criterion_10_composition(mnist):
    net = nn.build_network("mlp3", seed=0)
    cfg = nn.TrainConfig(lr=0.1, epochs=10, batch_size=64, seed=0)
    net, _ = nn.train_baseline(net, mnist, cfg)
    samples = calib_samples(net, mnist, 1000)
    rep = calibration.calibrate_network(net, samples, theta_fc=0.95)
    ft = nn.TrainConfig(lr=0.01, epochs=3, batch_size=64, seed=0,
                        dropout_rate=0.0)
    dasnet, _ = nn.finetune_dasnet(net.copy(), mnist, rep, ft)
    dasnet_acc = nn.evaluate(dasnet, mnist, use_masks=True)

    quantized = quantize_weights_linear8(dasnet).network
    quant_acc = nn.evaluate(quantized, mnist, use_masks=True)
    quant_drop = dasnet_acc - quant_acc

    pruned = magnitude_prune_fc(net.copy(), 0.2)
    pruned.set_rates({lc.layer_id: lc.chosen_p for lc in rep.layers})
    pruned, _ = nn.finetune_dasnet(pruned, mnist, rep, ft)
    pruned_acc = nn.evaluate(pruned, mnist, use_masks=True)
    base_acc = nn.evaluate(net, mnist, use_masks=False)
    prune_drop = base_acc - pruned_acc
    report_line(
        10,
        quant_drop <= 0.010 and prune_drop <= 0.010,
        f"8-bit quantization drop {quant_drop:+.4f} (need <=0.010); 20% "
        f"density + theta=0.95 WTA total drop {prune_drop:+.4f} "
        f"(need <=0.010)",
    )
