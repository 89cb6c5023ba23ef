"""Enclosure-method EIT reconstruction with learned convex hulls."""

__version__ = "0.1.0"

from .enclosure import ProbeGrid, indicator, indicator_matrix, ls_support_vector
from .femsolver import (
    DNMatrix,
    NDMatrix,
    build_disk_mesh,
    dn_analytic_concentric,
    dn_analytic_homogeneous,
    dn_from_nd,
    nd_matrix,
)
from .geometry import (
    Phantom,
    hull_from_support,
    relative_error,
    sample_test_phantom,
    sample_training_phantom,
    support_vector,
    true_hull,
)
from .network import NetworkWeights, TrainConfig, pad_indicator, predict_support, train

__all__ = [
    "DNMatrix",
    "NDMatrix",
    "NetworkWeights",
    "Phantom",
    "ProbeGrid",
    "TrainConfig",
    "build_disk_mesh",
    "dn_analytic_concentric",
    "dn_analytic_homogeneous",
    "dn_from_nd",
    "hull_from_support",
    "indicator",
    "indicator_matrix",
    "ls_support_vector",
    "nd_matrix",
    "pad_indicator",
    "predict_support",
    "relative_error",
    "sample_test_phantom",
    "sample_training_phantom",
    "support_vector",
    "train",
    "true_hull",
]
