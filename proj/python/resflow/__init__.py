"""Multi-task ranking toolkit: inter-task residual networks, baselines,
ranking metrics, and score fusion."""

from ._core import (
    ConfigError,
    DataError,
    NumericError,
    UndefinedMetricError,
    UsageError,
    auc,
    decode_expectation,
    encode_labels,
    evaluate_checkpoint,
    fuse,
    fuse_search,
    generate_funnel,
    gradcheck,
    ndcg,
    pearson,
    presets,
    run_training,
    weighted_recall,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "UndefinedMetricError",
    "UsageError",
    "auc",
    "decode_expectation",
    "encode_labels",
    "evaluate_checkpoint",
    "fuse",
    "fuse_search",
    "generate_funnel",
    "gradcheck",
    "ndcg",
    "pearson",
    "presets",
    "run_training",
    "weighted_recall",
]
