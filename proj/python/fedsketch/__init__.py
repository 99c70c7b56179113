"""Federated extreme multi-label learning simulator.

Thin re-export of the compiled core: label hash schemes, count sketches,
synthetic data generation, non-iid partitioning, federated training runs,
top-k metrics, and the statistical verification oracles.
"""

from ._core import (
    ConfigError,
    CountSketch,
    DataError,
    Dataset,
    Plan,
    Scheme,
    bucket_labels,
    class_frequencies,
    default_frequent_count,
    feature_hash,
    generate_synthetic,
    kl_divergence,
    merge_scores,
    min_table_size,
    model_bytes,
    mse_scaling,
    partition_noniid,
    run_experiment,
    smoothed_distribution,
    split_holdout,
    top_frequent_classes,
    topk_accuracy,
    verify_collision_rate,
    verify_kl_contraction,
)

__all__ = [
    "ConfigError",
    "CountSketch",
    "DataError",
    "Dataset",
    "Plan",
    "Scheme",
    "bucket_labels",
    "class_frequencies",
    "default_frequent_count",
    "feature_hash",
    "generate_synthetic",
    "kl_divergence",
    "merge_scores",
    "min_table_size",
    "model_bytes",
    "mse_scaling",
    "partition_noniid",
    "run_experiment",
    "smoothed_distribution",
    "split_holdout",
    "top_frequent_classes",
    "topk_accuracy",
    "verify_collision_rate",
    "verify_kl_contraction",
]
