from .datasets import (
    Dataset,
    export_mlxtend_mnist,
    load_mnist_idx,
    make_modular_addition,
    make_piecewise_regression,
    make_xor_clusters,
    piecewise_target,
    randomize_labels,
)
from .train import (
    Adam,
    LCHook,
    PGDHook,
    SliceSnapshotHook,
    TrainConfig,
    TrajectoryLog,
    config_hash,
    evaluate,
    log_checkpoints,
    train,
)

__all__ = [
    "Dataset",
    "export_mlxtend_mnist",
    "load_mnist_idx",
    "make_modular_addition",
    "make_piecewise_regression",
    "make_xor_clusters",
    "piecewise_target",
    "randomize_labels",
    "Adam",
    "LCHook",
    "PGDHook",
    "SliceSnapshotHook",
    "TrainConfig",
    "TrajectoryLog",
    "config_hash",
    "evaluate",
    "log_checkpoints",
    "train",
]
