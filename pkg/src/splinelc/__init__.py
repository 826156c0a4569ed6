"""Spline-partition geometry of small piecewise-linear networks.

Local complexity probes, exact 2D partition slices, PGD robustness and the
training loop that ties them into trajectories.
"""

__version__ = "0.1.0"

from .netcore import Activation, Layer, Network, backward, forward, init_network, load_weights, save_weights  # noqa: E402
from .lcprobe import LocalComplexity, ProbeConfig, batch_lc, local_complexity  # noqa: E402
from .adversarial import AttackConfig, pgd_attack, robust_accuracy  # noqa: E402
from .slicegeom import compute_partition, slice_through  # noqa: E402
from .estimators import SplineMLPClassifier, SplineMLPRegressor  # noqa: E402

__all__ = [
    "__version__",
    "Activation",
    "Layer",
    "Network",
    "backward",
    "forward",
    "init_network",
    "load_weights",
    "save_weights",
    "LocalComplexity",
    "ProbeConfig",
    "batch_lc",
    "local_complexity",
    "AttackConfig",
    "pgd_attack",
    "robust_accuracy",
    "compute_partition",
    "slice_through",
    "SplineMLPClassifier",
    "SplineMLPRegressor",
]
