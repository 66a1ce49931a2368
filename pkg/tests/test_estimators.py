import numpy as np
import pytest
from sklearn.base import clone

from affinewalk.estimators import AngularTailEstimator, SpectrumEstimator, TailConstantEstimator


def test_spectrum_estimator_scalar(scalar):
    est = SpectrumEstimator(kappa_N=50_000).fit(scalar)
    assert abs(est.alpha_ - np.log2(7 / 3)) < 0.05
    assert est.m_alpha_ > 0
    assert est.kappa(1.0) == pytest.approx(0.95, abs=0.02)


def test_spectrum_estimator_twisted(golden):
    est = SpectrumEstimator(method="twisted", tol=1e-9).fit(golden)
    assert est.alpha_ == pytest.approx(0.8, abs=1e-6)


def test_params_and_clone():
    est = TailConstantEstimator(alpha=1.5, subdivisions=4)
    assert est.get_params() == {"alpha": 1.5, "subdivisions": 4}
    twin = clone(est).set_params(alpha=2.0)
    assert twin.alpha == 2.0 and est.alpha == 1.5


def test_tail_constant_estimator_pareto():
    r = np.random.default_rng(0).uniform(size=200_000) ** (-1 / 1.5)
    est = TailConstantEstimator(alpha=1.5).fit(r)
    assert est.c_ / 1.5 == pytest.approx(1.0, abs=0.03)


def test_angular_estimator_point_direction():
    r = np.random.default_rng(1).uniform(size=100_000) ** -1.0
    x = np.column_stack([r, np.zeros_like(r)])
    est = AngularTailEstimator(grid_size=16).fit(x)
    assert est.measure_.weights[0] == 1.0
