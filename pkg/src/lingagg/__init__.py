"""lingagg: probe-based MI lower bounds for noisy layered features, and
layer-aggregation modules (static weighted sum, per-frame attention) trained
to maximize that bound.
"""

__version__ = "0.1.0"

from .aggregators import (
    DWSAggregator,
    FusedView,
    WSAggregator,
    compare_weights,
    dws_fuse,
    evaluate_aggregator,
    export_aggregator,
    import_aggregator,
    joint_heldout_bound,
    train_linguistic_dws,
    train_linguistic_ws,
    ws_fuse,
)
from .kernels import (
    AdamState,
    GradCheckReport,
    Probe,
    adam_step,
    cross_entropy,
    finite_diff_check,
    layer_attention_backward,
    layer_attention_forward,
    probe_backward,
    probe_forward,
    softmax,
)
from .lfa import (
    LayeredDataset,
    SplitSpec,
    dataset_hash,
    datasets_equal,
    group_by_snr,
    read_lfa,
    split,
    validate,
    write_lfa,
)
from .mi import (
    MIEstimate,
    MIReport,
    TrainConfig,
    empirical_entropy,
    layerwise_analysis,
    mi_bound,
    snr_analysis,
    train_probe,
)
from .synth import SynthSpec, binary_channel_mi, generate

__all__ = [
    "AdamState", "DWSAggregator", "FusedView", "GradCheckReport", "LayeredDataset",
    "MIEstimate", "MIReport", "Probe", "SplitSpec", "SynthSpec", "TrainConfig",
    "WSAggregator", "adam_step", "binary_channel_mi", "compare_weights",
    "cross_entropy", "dataset_hash", "datasets_equal", "dws_fuse", "empirical_entropy",
    "evaluate_aggregator", "export_aggregator", "finite_diff_check", "generate",
    "group_by_snr", "import_aggregator", "joint_heldout_bound", "layer_attention_backward",
    "layer_attention_forward", "layerwise_analysis", "mi_bound", "probe_backward",
    "probe_forward", "read_lfa", "snr_analysis", "softmax", "split", "train_linguistic_dws",
    "train_linguistic_ws", "train_probe", "validate", "write_lfa", "ws_fuse",
]
