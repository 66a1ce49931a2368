import numpy as np
import pytest
from scipy import integrate

from affinewalk import stablelaw as st
from affinewalk.model import AffineMixtureModel
from affinewalk.projective import AngularMeasure
from affinewalk.simulate import SampleCloud

from conftest import constant_model, scalar_model

E1 = np.array([1.0, 0.0])


def params(alpha, case="I", **kw):
    base = dict(alpha=alpha, m_alpha=0.3, c=1.2, p_alpha=0.7, case=case,
                c_star=lambda v: float(np.linalg.norm(v)) ** alpha,
                d=0.4, d_star=lambda v: 0.5 * float(np.linalg.norm(v)) ** alpha)
    base.update(kw)
    return st.StableParams(**base)


def test_psi_half_closed_form():
    # -Gamma(1/2)/(1/2) e^{-i pi/4}
    val = st.psi(1.0, 0.5)
    assert val == pytest.approx(-2 * np.sqrt(np.pi) * np.exp(-0.25j * np.pi), abs=1e-12)
    assert val == pytest.approx(-2.5066282746310007 + 2.5066282746310002j, abs=1e-12)


def test_psi_half_against_quadrature():
    near_re, _ = integrate.quad(lambda r: (np.cos(2 * r) - 1) * r**-1.5, 0, 1, limit=200)
    near_im, _ = integrate.quad(lambda r: np.sin(2 * r) * r**-1.5, 0, 1, limit=200)
    far_re, _ = integrate.quad(lambda r: r**-1.5, 1, np.inf, weight="cos", wvar=2.0)
    far_im, _ = integrate.quad(lambda r: r**-1.5, 1, np.inf, weight="sin", wvar=2.0)
    re, im = near_re + far_re - 2.0, near_im + far_im
    assert st.psi(2.0, 0.5) == pytest.approx(complex(re, im), rel=1e-6)


def test_psi_two_and_zero():
    assert st.psi(2.0, 2.0) == -1.0
    assert st.psi(0.0, 0.5) == 0.0
    assert st.psi(0.0, 1.5) == 0.0


def test_psi_conjugation():
    for a in (0.5, 1.0, 1.5):
        assert st.psi(-0.7, a) == pytest.approx(np.conj(st.psi(0.7, a)), abs=1e-14)


def test_alpha_one_constant_is_one_minus_euler_gamma():
    assert st._alpha_one_constant() == pytest.approx(1 - np.euler_gamma, abs=1e-9)


def test_psi_bad_alpha():
    with pytest.raises(st.RegimeError):
        st.psi(1.0, 2.5)


def test_lambda_tilde_zero():
    sig = AngularMeasure.uniform(32)
    assert st.lambda_tilde(np.zeros(2), 1.0, sig, 0.8) == 0


def test_closed_case_one_real_and_homogeneous():
    p = params(0.8)
    v = np.array([0.3, -0.4])
    c1 = st.C_alpha_closed(p, v)
    assert c1.imag == 0.0
    assert st.C_alpha_closed(p, 2 * v) == pytest.approx(2**0.8 * c1, rel=1e-12)
    assert c1.real < 0


def test_closed_sign_between_one_and_two():
    assert st.C_alpha_closed(params(1.5), E1).real < 0


def test_closed_case_two_has_imaginary_part():
    assert st.C_alpha_closed(params(0.8, "II"), E1).imag != 0.0


def test_closed_rejects_alpha_one():
    with pytest.raises(st.RegimeError):
        st.C_alpha_closed(params(1.0), E1)


def test_closed_zero_vector():
    assert st.C_alpha_closed(params(0.8), np.zeros(2)) == 0


def test_fourier_zero_vector():
    p = params(0.8, sigma=AngularMeasure.uniform(32))
    cloud = SampleCloud(np.random.default_rng(0).standard_normal((100, 2)))
    assert st.C_alpha_fourier(p, np.zeros(2), cloud) == 0


def test_delta_single_point_and_symmetry():
    np.testing.assert_allclose(st.delta_t(np.array([[0.6, 0.8]]), 1.0), [0.3, 0.4])
    x = np.random.default_rng(1).standard_normal((500, 2))
    sym = np.vstack([x, -x])
    assert np.abs(st.delta_t(sym, 0.37)).max() < 1e-15
    np.testing.assert_array_equal(st.delta_t(x, -0.2), -st.delta_t(x, 0.2))


def test_delta_bound_on_light_cloud():
    x = np.random.default_rng(2).standard_normal((2000, 2)) + [1.0, 0.0]
    db = st.delta_bound_check(x)
    assert db.ok


def test_centering_branches():
    x = np.random.default_rng(3).standard_normal((1000, 2)) + [1.0, 2.0]
    np.testing.assert_array_equal(st.centering(0.5, 10_000, x), 0.0)
    np.testing.assert_allclose(st.centering(1.5, 10_000, x), 10 ** (4 / 3) * x.mean(axis=0))
    sym = np.vstack([x, -x])
    assert np.abs(st.centering(1.0, 10_000, sym)).max() < 1e-10
    with pytest.raises(st.RegimeError):
        st.centering(2.5, 10, x)


def test_limit_cf_zero_and_clt_form():
    q = np.array([[2.0, 0.3], [0.3, 1.0]])
    p = params(3.0, q=q, z=np.zeros((2, 2)), m=np.zeros(2))
    assert st.limit_cf(p, np.zeros(2), "gaussian") == 1
    v = np.array([0.4, -0.2])
    assert st.limit_cf(p, v, "gaussian") == pytest.approx(np.exp(-0.5 * v @ q @ v), rel=1e-14)
    assert st.limit_cf(params(0.8), np.zeros(2)) == 1


def test_gaussian_resolvent_diagonal():
    q = np.array([[2.0, 0.3], [0.3, 1.0]])
    zeta = 0.4
    g = st.gaussian_exponent(q, np.diag([zeta, 0.0]), E1)
    assert g == pytest.approx(0.5 * q[0, 0] + q[0, 0] * zeta / (1 - zeta), rel=1e-14)
    with pytest.raises(st.RegimeError):
        st.gaussian_exponent(q, np.eye(2), E1)


def test_covariance_two_point():
    m = AffineMixtureModel.from_arrays([0.5, 0.5], [np.zeros((2, 2))] * 2, [[1, 0], [-1, 0]])
    x = np.array([[1.0, 0.0], [-1.0, 0.0]] * 50)
    mean, q, z = st.covariance_and_mean(x, m)
    np.testing.assert_allclose(mean, 0.0, atol=1e-15)
    np.testing.assert_allclose(q, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)
    np.testing.assert_array_equal(z, 0.0)


def test_covariance_psd(golden):
    x = np.random.default_rng(4).standard_normal((300, 2)) @ [[1.0, 0.9], [0.0, 0.1]]
    _, q, _ = st.covariance_and_mean(x, golden)
    assert np.linalg.eigvalsh(q).min() >= -1e-10 * np.trace(q)


def test_stationary_moments_scalar():
    m = AffineMixtureModel.from_arrays([0.3, 0.7], [[[0.8]], [[0.3]]], [[1.0], [1.5]])
    mean, q, z = st.stationary_moments(m)
    EM, EQ = 0.3 * 0.8 + 0.7 * 0.3, 0.3 * 1.0 + 0.7 * 1.5
    EM2, EMQ, EQ2 = 0.3 * 0.64 + 0.7 * 0.09, 0.3 * 0.8 + 0.7 * 0.3 * 1.5, 0.3 + 0.7 * 2.25
    m1 = EQ / (1 - EM)
    m2 = (EQ2 + 2 * EMQ * m1) / (1 - EM2)
    assert mean[0] == pytest.approx(m1, rel=1e-12)
    assert q[0, 0] == pytest.approx(m2 - m1 * m1, rel=1e-12)
    assert z[0, 0] == pytest.approx(EM)


def test_stationary_moments_rejects_heavy_tail():
    with pytest.raises(st.RegimeError):
        st.stationary_moments(scalar_model())


def test_iid_clt_panel():
    m = AffineMixtureModel.from_arrays([0.5, 0.5], [np.zeros((2, 2))] * 2, [[1, 0], [-1, 0]])
    mean, q, z = st.stationary_moments(m)
    p = params(3.0, m=mean, q=q, z=z)
    v = np.array([[0.5, 0.0], [1.0, 0.0], [0.3, 0.7]])
    panel = st.empirical_vs_limit(m, np.zeros(2), 3.0, [400], v, 20_000, 7, p)
    assert panel.max_deviation() < 0.03


def test_variance_panel_iid():
    m = AffineMixtureModel.from_arrays([0.5, 0.5], [np.zeros((2, 2))] * 2, [[1, 0], [-1, 2]])
    vp = st.gaussian_variance_panel(m, np.zeros(2), 200, 20_000, 8, [[1.0, 0.0], [0.0, 1.0]])
    assert np.all(vp.rel_deviation < 0.05)
