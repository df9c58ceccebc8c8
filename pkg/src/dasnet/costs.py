"""MAC counting, ranking-cost ratios, and wall-clock layer benchmarks.

MAC counts assume minibatch size 1.  Condensation never compacts weight
storage: winner rows are skipped by index gathering, preserving the
dense accumulation order.  Ranking comparison counts are reported two
ways: the K*log2(K) sort-style figure the cost ratios use, and the
comparison count measured from an instrumented quickselect, since
selection runs in expected linear time.
"""

import csv
import json
import math
import statistics
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import kernels
from .nn import Network
from .wta import make_fc_mask, make_conv_mask, winner_count


def ranking_cost_ratio_fc(k: int, o: int, p: float) -> float:
    """Ranking cost over saved fc computation: log2(K) / ((1-p) * O)."""
    if k < 1 or o < 1:
        raise ValueError("dimensions must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError(f"winner rate must be in (0, 1) for savings, got {p}")
    return math.log2(k) / ((1.0 - p) * o)


def ranking_cost_ratio_conv(
    h: int, w: int, c: int, f: int, n: int, p: float
) -> tuple[float, float]:
    """Conv ranking cost over saved computation.

    Returns (exact, approx): the full (HWC + C log2 C) / ((1-p) F^2 HWCN)
    ratio and its 1 / ((1-p) F^2 N) approximation.
    """
    if min(h, w, c, f, n) < 1:
        raise ValueError("dimensions must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError(f"winner rate must be in (0, 1) for savings, got {p}")
    exact = (h * w * c + c * math.log2(c)) / ((1.0 - p) * f * f * h * w * c * n)
    approx = 1.0 / ((1.0 - p) * f * f * n)
    return exact, approx


def quickselect_comparisons(values, k: int, seed: int = 0) -> int:
    """Comparison count of a quickselect partition of the k largest
    magnitudes; expected O(n)."""
    v = np.abs(np.asarray(values, dtype=np.float64).ravel()).copy()
    rng = np.random.default_rng(seed)
    comparisons = 0
    left, right = 0, v.size - 1
    target = v.size - k  # partition so the k largest sit on the right
    if k <= 0 or k >= v.size:
        return 0
    while left < right:
        pivot = v[rng.integers(left, right + 1)]
        i, j = left, right
        while i <= j:
            while v[i] < pivot:
                i += 1
                comparisons += 1
            while v[j] > pivot:
                j -= 1
                comparisons += 1
            comparisons += 2
            if i <= j:
                v[i], v[j] = v[j], v[i]
                i += 1
                j -= 1
        if target <= j:
            right = j
        elif target >= i:
            left = i
        else:
            break
    return comparisons


@dataclass
class LayerCost:
    name: str
    kind: str
    input_winner_rate: float
    dense_macs: int
    condensed_macs: int
    ranking_comparisons: float  # sort-style count behind the ratio formulas
    measured_comparisons: int  # instrumented quickselect on random data
    input_bytes_dense: int
    input_bytes_condensed: int
    winner_rate: float | None  # the layer's own calibrated rate, if masked
    cost_ratio: float | None  # ranking-over-savings ratio at the own rate
    cost_ratio_approx: float | None


@dataclass
class CostReport:
    layers: list
    total_dense_macs: int
    total_condensed_macs: int
    mac_reduction_percent: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "layers": [asdict(l) for l in self.layers],
                "total_dense_macs": self.total_dense_macs,
                "total_condensed_macs": self.total_condensed_macs,
                "mac_reduction_percent": self.mac_reduction_percent,
            },
            indent=2,
            sort_keys=True,
        )

    def to_csv(self, path):
        fields = list(LayerCost.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for layer in self.layers:
                row = asdict(layer)
                writer.writerow([row[f] for f in fields])


def layer_geometries(net: Network) -> list[dict]:
    """Walk the network, tracking spatial dims, and emit one geometry
    record per layer (input sizes as seen at inference)."""
    shape = tuple(net.input_shape)
    records = []
    for spec in net.specs:
        if spec.kind == "conv":
            h, w, c = shape
            h_out = h + 2 * spec.pad - spec.filter_size + 1
            w_out = w + 2 * spec.pad - spec.filter_size + 1
            records.append(
                {
                    "name": spec.name,
                    "kind": "conv",
                    "H": h,
                    "W": w,
                    "C": c,
                    "F": spec.filter_size,
                    "N": spec.out_channels,
                    "H_out": h_out,
                    "W_out": w_out,
                    "pad": spec.pad,
                }
            )
            shape = (h_out // 2, w_out // 2, spec.out_channels) if spec.pool else (
                h_out,
                w_out,
                spec.out_channels,
            )
        else:
            k = int(np.prod(shape))
            records.append(
                {"name": spec.name, "kind": "fc", "K": k, "O": spec.out_features}
            )
            shape = (spec.out_features,)
    return records


def count_macs(net: Network, calibration=None, rates: dict | None = None,
               seed: int = 0) -> CostReport:
    """Dense vs condensed MAC counts per layer at minibatch 1.

    The mask on a layer's output condenses the *next* layer's input, so
    each layer's condensed count scales by the winner rate of the layer
    feeding it.  The ranking-cost ratio is reported per masked layer,
    evaluated on that layer's input geometry at its own winner rate.
    Rates come from `rates`, else the calibration report, else the rates
    frozen on the network.
    """
    if rates is None:
        rates = {}
        if calibration is not None:
            rates = {lc.layer_id: lc.chosen_p for lc in calibration.layers}
        else:
            rates = {k: v for k, v in net.rates().items() if v is not None}
    geoms = layer_geometries(net)
    layers = []
    total_dense = total_cond = 0
    p_in = 1.0  # the input data is never masked
    for spec, geom in zip(net.specs, geoms):
        p_own = rates.get(spec.name) if spec.wta_eligible else None
        if spec.kind == "conv":
            h, w, c, f, n = geom["H"], geom["W"], geom["C"], geom["F"], geom["N"]
            spatial = geom["H_out"] * geom["W_out"]
            dense = f * f * spatial * c * n
            kept = winner_count(p_in, c) if p_in < 1.0 else c
            cond = f * f * spatial * kept * n
            bytes_dense = h * w * c * 4
            bytes_cond = h * w * kept * 4
            if p_own is not None and 0.0 < p_own < 1.0:
                ratio, approx = ranking_cost_ratio_conv(h, w, c, f, n, p_own)
                comps = h * w * c + c * math.log2(c)
                measured = h * w * c + quickselect_comparisons(
                    np.random.default_rng(seed).random(c),
                    winner_count(p_own, c),
                    seed,
                )
            else:
                ratio = approx = None
                comps = 0.0
                measured = 0
        else:
            k, o = geom["K"], geom["O"]
            dense = k * o
            kept = winner_count(p_in, k) if p_in < 1.0 else k
            cond = kept * o
            bytes_dense = k * 4
            bytes_cond = kept * 4
            if p_own is not None and 0.0 < p_own < 1.0:
                ratio = ranking_cost_ratio_fc(k, o, p_own)
                approx = None
                comps = k * math.log2(k)
                measured = quickselect_comparisons(
                    np.random.default_rng(seed).random(k),
                    winner_count(p_own, k),
                    seed,
                )
            else:
                ratio = approx = None
                comps = 0.0
                measured = 0
        layers.append(
            LayerCost(
                spec.name,
                spec.kind,
                p_in,
                dense,
                cond,
                comps,
                measured,
                bytes_dense,
                bytes_cond,
                p_own,
                ratio,
                approx,
            )
        )
        total_dense += dense
        total_cond += cond
        p_in = rates.get(spec.name, 1.0) if spec.wta_eligible else 1.0
    reduction = 100.0 * (1.0 - total_cond / total_dense)
    return CostReport(layers, total_dense, total_cond, reduction)


# ---------------------------------------------------------------------------
# wall-clock benchmarking


def _median_time(fn, repetitions: int) -> float:
    fn()  # warm-up (also triggers JIT compilation)
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_layer(geometry: dict, p: float, repetitions: int = 9,
                seed: int = 0) -> dict:
    """Median wall time of the dense path vs ranking + condensed path.

    `geometry` is one record from layer_geometries.  Timing runs
    sequentially on the active kernel backend; the returned record
    normalizes to the dense time (the ranking share is relative to it).
    """
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    rng = np.random.default_rng(seed)
    if geometry["kind"] == "fc":
        k, o = geometry["K"], geometry["O"]
        w = rng.standard_normal((o, k)).astype(np.float32)
        x = np.abs(rng.standard_normal(k)).astype(np.float32)
        mask = make_fc_mask(x, p)
        t_rank = _median_time(lambda: make_fc_mask(x, p), repetitions)
        t_dense = _median_time(lambda: kernels.dense_gemm(w, x), repetitions)
        t_cond = _median_time(
            lambda: kernels.condensed_gemm(w, x, mask), repetitions
        )
    else:
        h, wd, c, f, n = (
            geometry["H"],
            geometry["W"],
            geometry["C"],
            geometry["F"],
            geometry["N"],
        )
        pad = geometry.get("pad", (f - 1) // 2)
        fm = np.abs(rng.standard_normal((h, wd, c))).astype(np.float32)
        wmat = kernels.conv_filter_matrix(
            rng.standard_normal((n, f, f, c)).astype(np.float32)
        )
        mask = make_conv_mask(fm, p)
        wcond = kernels.gather_filter_columns(wmat, mask, f)

        def dense():
            col = kernels.im2col(fm, f, 1, pad)
            return kernels.dense_gemm(wmat, col)

        def condensed():
            col = kernels.im2col_masked(fm, mask, f, 1, pad)
            return kernels.dense_gemm(wcond, col)

        t_rank = _median_time(lambda: make_conv_mask(fm, p), repetitions)
        t_dense = _median_time(dense, repetitions)
        t_cond = _median_time(condensed, repetitions)
    total_sparse = t_rank + t_cond
    return {
        "name": geometry.get("name", geometry["kind"]),
        "kind": geometry["kind"],
        "p": mask.winner_rate,
        "dense_s": t_dense,
        "ranking_s": t_rank,
        "condensed_s": t_cond,
        "normalized_sparse_time": total_sparse / t_dense,
        "speedup": t_dense / total_sparse,
        "ranking_share_of_dense": t_rank / t_dense,
    }


def bench_network(net: Network, rates: dict, repetitions: int = 9,
                  seed: int = 0) -> list[dict]:
    """Per-layer bench records for every layer with a condensable input."""
    records = []
    p_in = 1.0
    for spec, geom in zip(net.specs, layer_geometries(net)):
        if 0.0 < p_in < 1.0:
            records.append(bench_layer(geom, p_in, repetitions, seed))
        p_in = rates.get(spec.name, 1.0) if spec.wta_eligible else 1.0
    return records
