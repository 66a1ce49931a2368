"""Estimator-style wrappers (``fit`` / ``get_params``) over the functional API.

The functional modules remain the primary interface; these classes only
hold hyper-parameters and expose fitted results as trailing-underscore
attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import spectrum, tails


class SpectrumEstimator(BaseEstimator):
    """Tail index ``alpha`` and ``m_alpha = kappa'(alpha)`` of a model.

    ``fit`` takes an :class:`AffineMixtureModel` in place of a data matrix.
    """

    def __init__(self, method="mc", kappa_n=8, kappa_N=200_000, grid_size=512, tol=1e-6,
                 seed=0):
        self.method = method
        self.kappa_n = kappa_n
        self.kappa_N = kappa_N
        self.grid_size = grid_size
        self.tol = tol
        self.seed = seed

    def fit(self, model, y=None):
        budgets = {"n": self.kappa_n, "N": self.kappa_N,
                   "grid_size": self.grid_size, "seed": self.seed}
        ev = spectrum.kappa_evaluator(model, self.method, budgets)
        ti = spectrum.tail_index(model, tol=self.tol, samples=ev)
        self.alpha_ = ti.alpha
        self.alpha_ci_ = ti.ci
        self.m_alpha_ = spectrum.kappa_derivative(model, ti.alpha, samples=ev)
        self.evaluator_ = ev
        return self

    def kappa(self, s):
        """``kappa(s)`` from the fitted evaluator."""
        return np.exp(np.vectorize(self.evaluator_.log_kappa)(s))


class TailConstantEstimator(BaseEstimator):
    """Direct tail constant ``c`` from a stationary sample (rows are points)."""

    def __init__(self, alpha=1.0, subdivisions=8):
        self.alpha = alpha
        self.subdivisions = subdivisions

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.profile_ = tails.dyadic_profile(X, self.alpha, subdivisions=self.subdivisions)
        est = tails.tail_constant_direct(X, self.alpha, self.profile_)
        self.c_, self.c_ci_, self.c_std_err_ = est.value, est.ci, est.std_err
        return self


class AngularTailEstimator(BaseEstimator):
    """Empirical angular tail measure ``sigma`` from the top quantile of norms."""

    def __init__(self, threshold_quantile=0.01, grid_size=512, symmetrized=False):
        self.threshold_quantile = threshold_quantile
        self.grid_size = grid_size
        self.symmetrized = symmetrized

    def fit(self, X, y=None):
        self.measure_ = tails.angular_tail(np.asarray(X, dtype=float), self.threshold_quantile,
                                           self.grid_size, self.symmetrized)
        return self
