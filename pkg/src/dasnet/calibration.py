"""Offline winner-rate calibration.

Maps a cumulative-energy threshold theta to a per-layer winner rate p:
fc layers from per-sample activation energy, conv layers from the
singular spectrum of the reshaped feature-map matrix.  The spectrum is
computed from the C x C Gram matrix (only eigenvalues are needed and C
is small), which is mathematically identical to squaring the singular
values of the S x C matrix itself.
"""

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateInputError, ShapeMismatchError, UntrainedNetworkError
from .wta import cumulative_energy_count

THETA_GRID = (0.80, 0.85, 0.90, 0.95, 0.99, 1.0)


@dataclass
class EnergySpectrum:
    """Descending nonnegative energies (squared singular values)."""

    energies: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        if e.size == 0:
            raise ValueError("empty spectrum")
        if np.any(np.diff(e) > 0):
            raise ValueError("energies must be sorted descending")
        if e[-1] < 0:
            raise ValueError("energies must be nonnegative")
        self.energies = e
        self.total = float(e.sum())


@dataclass
class LayerCalibration:
    layer_id: str
    kind: str  # "conv" | "fc"
    theta_p_curve: list  # [(theta, p), ...] over THETA_GRID
    chosen_theta: float
    chosen_p: float
    spectrum_summary: dict | None = None


@dataclass
class CalibrationReport:
    layers: list
    sample_count: int
    theta_conv: float
    theta_fc: float

    def rate_for(self, layer_id: str) -> float | None:
        for lc in self.layers:
            if lc.layer_id == layer_id:
                return lc.chosen_p
        return None

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_count": self.sample_count,
                "theta_conv": self.theta_conv,
                "theta_fc": self.theta_fc,
                "layers": [asdict(lc) for lc in self.layers],
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CalibrationReport":
        raw = json.loads(text)
        layers = [LayerCalibration(**lc) for lc in raw["layers"]]
        return cls(layers, raw["sample_count"], raw["theta_conv"], raw["theta_fc"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "CalibrationReport":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def curve_csv(self, path):
        """theta -> p curve per layer, for plotting."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "theta", "p"])
            for lc in self.layers:
                for theta, p in lc.theta_p_curve:
                    writer.writerow([lc.layer_id, theta, p])


def reshape_fm_to_matrix(fms) -> np.ndarray:
    """Stack every pixel's channel vector fm[h, w, :] as one row.

    Row order is (map, h, w) lexicographic; output is S x C with
    S = sum of H*W over the maps.
    """
    fms = list(fms)
    if not fms:
        raise ShapeMismatchError("need at least one feature map")
    c = fms[0].shape[-1]
    rows = []
    for fm in fms:
        if fm.ndim != 3 or fm.shape[-1] != c:
            raise ShapeMismatchError(
                f"feature maps disagree on channel count: {fm.shape} vs C={c}"
            )
        rows.append(fm.reshape(-1, c))
    return np.concatenate(rows, axis=0)


def singular_spectrum(m: np.ndarray) -> EnergySpectrum:
    """Squared singular values of M, via the C x C Gram matrix."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise FloatingPointError("matrix contains non-finite entries")
    gram = m.T @ m
    eigvals = np.linalg.eigvalsh(gram)[::-1]
    return EnergySpectrum(np.maximum(eigvals, 0.0))


def spectrum_from_gram(gram: np.ndarray) -> EnergySpectrum:
    """Spectrum from an accumulated Gram matrix (associative reduction
    over sample batches)."""
    eigvals = np.linalg.eigvalsh(np.asarray(gram, dtype=np.float64))[::-1]
    return EnergySpectrum(np.maximum(eigvals, 0.0))


def winner_rate_from_spectrum(spectrum: EnergySpectrum, theta: float) -> float:
    """p = C'/C where C' is the effective rank at threshold theta."""
    if spectrum.total <= 0:
        raise DegenerateInputError("spectrum has zero total energy")
    k = cumulative_energy_count(spectrum.energies, theta)
    return k / spectrum.energies.size


def _fc_rate_from_activations(acts: np.ndarray, theta: float) -> float:
    """Mean minimal winner count across samples, rounded up to 1/N."""
    n = acts.shape[1]
    sq = np.sort(acts.astype(np.float64) ** 2, axis=1)[:, ::-1]
    csum = np.cumsum(sq, axis=1)
    totals = csum[:, -1]
    live = totals > 0
    if not np.any(live):
        raise DegenerateInputError("all calibration activations are zero")
    ks = (csum[live] < theta * totals[live, None]).sum(axis=1) + 1
    ks = np.minimum(ks, n)
    return min(1.0, math.ceil(float(ks.mean()) - 1e-9) / n)


def fc_winner_rate_profile(net, layer_id: str, samples, theta: float) -> float:
    """Winner rate for one fc layer from per-sample activation energy."""
    from . import nn

    index = net.layer_index(layer_id)
    spec = net.specs[index]
    if spec.kind != "fc" or not spec.wta_eligible:
        raise ValueError(f"layer {layer_id!r} is not a maskable fc layer")
    _, caches = nn.forward_batch(net, samples, use_masks=False)
    return _fc_rate_from_activations(caches[index]["a_o"], theta)


def calibrate_network(
    net,
    samples: np.ndarray,
    theta_conv: float = 0.99,
    theta_fc: float = 0.95,
    fv_mode: str = "max",
    batch_size: int = 100,
) -> CalibrationReport:
    """One analysis pass of the tuning flow: derive p for every
    maskable layer and sample the full theta -> p curve.

    `samples` are calibration inputs drawn from the training split
    (1000 by default in the CLI, enough in practice).
    """
    from . import nn

    if net.epochs_completed == 0:
        raise UntrainedNetworkError(
            "calibration requires a trained network (epochs_completed > 0)"
        )
    grams: dict[int, np.ndarray] = {}
    fc_acts: dict[int, list] = {}
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        _, caches = nn.forward_batch(net, batch, use_masks=False)
        for i, spec in enumerate(net.specs):
            if not spec.wta_eligible:
                continue
            a_o = caches[i]["a_o"]
            if spec.kind == "conv":
                m = a_o.reshape(-1, a_o.shape[-1]).astype(np.float64)
                grams[i] = grams.get(i, 0) + m.T @ m
            else:
                fc_acts.setdefault(i, []).append(a_o)

    thetas = sorted(set(THETA_GRID) | {theta_conv, theta_fc})
    layers = []
    for i, spec in enumerate(net.specs):
        if not spec.wta_eligible:
            continue
        if spec.kind == "conv":
            spectrum = spectrum_from_gram(grams[i])
            curve = [(t, winner_rate_from_spectrum(spectrum, t)) for t in thetas]
            chosen = winner_rate_from_spectrum(spectrum, theta_conv)
            head = spectrum.energies[:8] / max(spectrum.total, 1e-30)
            layers.append(
                LayerCalibration(
                    spec.name,
                    "conv",
                    curve,
                    theta_conv,
                    chosen,
                    {
                        "channels": int(spectrum.energies.size),
                        "energy_head": [float(v) for v in head],
                    },
                )
            )
        else:
            acts = np.concatenate(fc_acts[i], axis=0)
            curve = [(t, _fc_rate_from_activations(acts, t)) for t in thetas]
            chosen = _fc_rate_from_activations(acts, theta_fc)
            layers.append(
                LayerCalibration(spec.name, "fc", curve, theta_fc, chosen)
            )
    return CalibrationReport(layers, len(samples), theta_conv, theta_fc)
