"""dasnet: dynamic activation sparsity via winners-take-all masking.

Trains small reference classifiers, calibrates per-layer winner rates
from a cumulative-energy threshold, finetunes under run-time WTA masks,
and executes inference through row-condensed GEMM kernels with measured
MAC savings and ranking overhead.
"""

from .backend import active_backend
from .tensor import as_tensor, relu, channel_slice
from .wta import (
    WtaMask,
    FeatureVector,
    partial_select_top_k,
    winner_count_by_energy,
    make_fc_mask,
    make_conv_mask,
    feature_vector,
    apply_mask,
)
from .calibration import (
    EnergySpectrum,
    CalibrationReport,
    reshape_fm_to_matrix,
    singular_spectrum,
    winner_rate_from_spectrum,
    calibrate_network,
)
from .nn import (
    Network,
    TrainConfig,
    build_network,
    forward,
    backward,
    sgd_step,
    train_baseline,
    finetune_dasnet,
    evaluate,
)
from .compression import quantize_weights_linear8, magnitude_prune_fc
from .costs import (
    CostReport,
    ranking_cost_ratio_fc,
    ranking_cost_ratio_conv,
    count_macs,
    bench_layer,
)

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "as_tensor",
    "relu",
    "channel_slice",
    "WtaMask",
    "FeatureVector",
    "partial_select_top_k",
    "winner_count_by_energy",
    "make_fc_mask",
    "make_conv_mask",
    "feature_vector",
    "apply_mask",
    "EnergySpectrum",
    "CalibrationReport",
    "reshape_fm_to_matrix",
    "singular_spectrum",
    "winner_rate_from_spectrum",
    "calibrate_network",
    "Network",
    "TrainConfig",
    "build_network",
    "forward",
    "backward",
    "sgd_step",
    "train_baseline",
    "finetune_dasnet",
    "evaluate",
    "quantize_weights_linear8",
    "magnitude_prune_fc",
    "CostReport",
    "ranking_cost_ratio_fc",
    "ranking_cost_ratio_conv",
    "count_macs",
    "bench_layer",
]
