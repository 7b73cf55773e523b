"""Explainable multivariate time-series classification.

Per-variable 1-d convolutions summarize each series over sliding time
intervals; an attention network over variables builds a context vector
per interval, an attention network over intervals builds the summary
embedding, and a small feed-forward head classifies it. The product of
the two attention distributions is a per-instance relevance map over
(variable, interval) cells.
"""

from .attention import (
    AttentionExplanation,
    AttentionParams,
    attention_backward,
    attention_forward,
    init_attention_params,
    joint_attention,
    temporal_attention,
    variable_attention,
)
from .baselines import (
    DtwConfig,
    LrConfig,
    LrModel,
    dtw_bruteforce,
    dtw_distance,
    knn_dtw_classify,
    knn_dtw_predict,
    lr_predict,
    lr_predict_batch,
    lr_train,
)
from .convfeat import (
    ConvSpec,
    IntervalLayout,
    conv_backward,
    conv_forward,
    interval_count,
    stride_from_kernel,
)
from .data import (
    GroundTruthMask,
    MtsDataset,
    SynthParams,
    generate_synthetic,
    load_dataset,
    save_dataset,
    stratified_split,
)
from .errors import DataError, FormatError, UnsupportedOperationError, UsageError
from .evaluate import (
    OverlapRule,
    accuracy,
    allocation_score,
    confusion_matrix,
    evaluation_report,
    export_heatmap,
    uniform_allocation_score,
)
from .model import (
    ABLATIONS,
    ConvAttnConfig,
    ConvAttnModel,
    ForwardTrace,
    config_for_dataset,
    deserialize,
    load_model,
    save_model,
    serialize,
)
from .numerics import (
    SeededRng,
    activation_derivative,
    apply_activation,
    cross_entropy,
    derive_seed,
    finite_diff_gradient,
    max_relative_error,
    softmax,
)
from .trainer import (
    DEFAULT_GRIDS,
    AdamState,
    TrainProtocol,
    TrainReport,
    adam_step,
    grid_search,
    train,
    train_repeats,
)

__version__ = "0.1.0"
