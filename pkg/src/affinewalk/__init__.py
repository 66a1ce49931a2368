"""Affine recursions ``X_n = M_n X_{n-1} + Q_n``: Kesten tails, tail constants, stable limits."""

from .model import AffineMap, AffineMixtureModel, companion_model, condition_report, golden_model
from .simulate import (SampleCloud, backward_stationary_sample, birkhoff_sum_cloud,
                       companion_series, paired_eta_etaprime_sample)
from .spectrum import kappa_curve, kappa_derivative, kappa_estimate, lyapunov_estimate, tail_index

__version__ = "0.1.0"

__all__ = [
    "AffineMap", "AffineMixtureModel", "SampleCloud", "backward_stationary_sample",
    "birkhoff_sum_cloud", "companion_model", "companion_series", "condition_report",
    "golden_model", "kappa_curve", "kappa_derivative", "kappa_estimate", "lyapunov_estimate",
    "paired_eta_etaprime_sample", "tail_index",
]
