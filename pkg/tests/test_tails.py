import numpy as np
import pytest

from affinewalk import spectrum as sp, tails as tl
from affinewalk.projective import alpha_profile
from affinewalk.simulate import paired_eta_etaprime_sample

from conftest import constant_model


def pareto_cloud(alpha, N, seed, d=2):
    rng = np.random.default_rng(seed)
    r = rng.uniform(size=N) ** (-1.0 / alpha)
    u = np.zeros((N, d))
    u[:, 0] = 1.0
    return r[:, None] * u


def test_pareto_column_flat():
    prof = tl.dyadic_profile(pareto_cloud(1.5, 200_000, 0), 1.5)
    rel = prof.reliable
    y, se = prof.normalized[rel], prof.std_err[rel]
    assert np.all(np.abs(y - 1.0) < 3 * se + 1e-12)


def test_pareto_direct_constant():
    c = tl.tail_constant_direct(pareto_cloud(1.5, 200_000, 1), 1.5)
    assert c.value / 1.5 == pytest.approx(1.0, abs=0.03)
    assert c.ci[0] < 1.5 < c.ci[1]


def test_direct_constant_scales():
    x = pareto_cloud(0.8, 100_000, 2)
    c1 = tl.tail_constant_direct(x, 0.8).value
    c3 = tl.tail_constant_direct(3.0 * x, 0.8).value
    assert c3 / c1 == pytest.approx(3.0**0.8, rel=0.05)


def test_bounded_cloud_fails():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, size=(50_000, 2))
    with pytest.raises((tl.HomogeneityNotReached, tl.InsufficientTailData)):
        tl.tail_constant_direct(x, 1.0)


def test_isotropic_angular_tail_uniform():
    rng = np.random.default_rng(4)
    N = 400_000
    phi = rng.uniform(0, 2 * np.pi, N)
    r = rng.uniform(size=N) ** -1.0
    x = r[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])
    mu = tl.angular_tail(x, 0.01, grid_size=16)
    counts = mu.weights * 4000
    chi2 = np.sum((counts - 250.0) ** 2 / 250.0)
    assert chi2 < 40.0  # 15 dof, far tail of chi^2


def test_angular_tail_needs_exceedances():
    with pytest.raises(tl.InsufficientTailData):
        tl.angular_tail(pareto_cloud(1.0, 10_000, 5), 0.01)


def test_scalar_direct_vs_renewal(scalar):
    ti = sp.tail_index(scalar)
    m_a = sp.kappa_derivative(scalar, ti.alpha)
    eta, eta_p = paired_eta_etaprime_sample(scalar, seed=6, N=200_000)
    prof = alpha_profile(scalar, ti.alpha)
    direct = tl.tail_constant_direct(eta, ti.alpha)
    renewal = tl.tail_constant_renewal(scalar, ti.alpha, m_a, prof, (eta, eta_p))
    assert abs(direct.value / renewal.value - 1) < 0.25


def test_renewal_zero_noise():
    m = constant_model(0.5 * np.eye(2), [0.0, 0.0])
    eta, eta_p = paired_eta_etaprime_sample(m, N=100)
    prof = alpha_profile(constant_model(np.diag([2.0, 0.25]), [0, 0]), 1.0)
    assert tl.tail_constant_renewal(m, 1.0, 0.3, prof, (eta, eta_p)).value == 0.0


def test_renewal_needs_positive_m():
    with pytest.raises(tl.InconsistentSpectrum):
        tl._renewal(np.ones(10), -1.0)


def test_companion_of_reset_model_has_no_tail():
    m = constant_model(np.zeros((2, 2)), [1.0, 0.0])
    with pytest.raises((tl.InsufficientTailData, tl.HomogeneityNotReached)):
        tl.companion_tail_constant(m, [1.0, 0.0], 0.8, {"N_samples": 10_000})
