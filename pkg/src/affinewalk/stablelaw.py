"""Parameters of the stable (or Gaussian) limit of normalized Birkhoff sums.

The log-characteristic function ``C_alpha(v)`` is computed by three routes:

* closed form from ``m_alpha, p(alpha), c, c*(v)``;
* the tail route ``alpha m_alpha Delta_v(Lambda~^1)`` using the angular tail
  measures of the eta and eta_v clouds;
* the Fourier route ``E[Lambda~(Y + v) - Lambda~(Y)]`` with ``Y ~ eta_v``.

``Lambda = c sigma_alpha (x) l^alpha`` is represented by the constant ``c`` and an
angular measure; every radial integral has a closed form except the
``alpha = 1`` branch, which is integrated numerically once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gamma as Gamma

from .projective import AngularMeasure

log = logging.getLogger(__name__)


class RegimeError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _alpha_one_constant():
    """``int_0^inf (sin r - r / (1 + r^2)) / r^2 dr``."""
    near, e1 = integrate.quad(lambda r: (np.sin(r) - r / (1 + r * r)) / (r * r), 0, 1,
                              limit=200)
    far_sin, e2 = integrate.quad(lambda r: 1.0 / (r * r), 1, np.inf, weight="sin", wvar=1.0)
    far_rat, e3 = integrate.quad(lambda r: 1.0 / (r * (1 + r * r)), 1, np.inf)
    err = e1 + e2 + e3
    if not err < 1e-8:
        raise QuadratureError(f"alpha = 1 radial quadrature error estimate {err:.3g}")
    return near + far_sin - far_rat


def psi(u, alpha):
    """Radial integral of one direction of ``Lambda~``.

    ``int_0^inf (e^{iur} - 1 - comp) r^{-alpha-1} dr`` with the compensator of
    the ``alpha`` branch; ``-u^2/4`` for ``alpha = 2``.
    """
    u = np.asarray(u, dtype=float)
    if not 0 < alpha <= 2:
        raise RegimeError("the Lambda~ branches cover 0 < alpha <= 2")
    if alpha == 2:
        return (-0.25 * u * u).astype(complex)
    if alpha == 1:
        return -0.5 * np.pi * np.abs(u) + 1j * _alpha_one_constant() * u
    amp = -Gamma(1 - alpha) / alpha * np.abs(u) ** alpha
    return amp * np.exp(-1j * np.sign(u) * alpha * np.pi / 2)


def lambda_tilde_radial(w, y, alpha):
    """``psi_alpha(<y, w>)``, so that ``Lambda~(y) = c sum_w sigma(w) psi_alpha(<y, w>)``."""
    return psi(np.dot(np.asarray(y, float), np.asarray(w, float)), alpha)


def lambda_tilde(y, c, sigma, alpha):
    """``Lambda~(y)`` for rows ``y`` and ``Lambda = c sigma (x) l^alpha`` (sigma on the sphere)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    u, w = _sphere(sigma)
    out = np.empty(y.shape[0], dtype=complex)
    for i in range(0, y.shape[0], 8192):
        out[i:i + 8192] = psi(y[i:i + 8192] @ u.T, alpha) @ w
    return c * out


def _sphere(measure):
    """Support and weights of a measure viewed on the sphere (projective ones are symmetrized)."""
    if measure.symmetrized:
        return (np.concatenate([measure.support, -measure.support]),
                np.concatenate([measure.weights, measure.weights]) / 2)
    return measure.support, measure.weights


@dataclass
class StableParams:
    """Everything the limit law depends on.

    ``c_star`` maps a vector ``v`` to ``c*(v)``; ``d_star`` likewise (case II).
    """

    alpha: float
    m_alpha: float
    c: float
    p_alpha: float
    case: str = "I"
    c_star: object = None
    d: float = 0.0
    d_star: object = None
    sigma: AngularMeasure = None
    m: np.ndarray = None
    q: np.ndarray = None
    z: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.alpha > 0:
            raise RegimeError("alpha must be positive")
        if self.alpha <= 2 and not self.m_alpha > 0:
            raise RegimeError("m_alpha must be positive")

    @property
    def regime(self):
        if self.alpha > 2:
            return "gaussian"
        if self.alpha == 2:
            return "log-gaussian"
        return "stable"


def C_alpha_closed(params, v):
    a = params.alpha
    if not 0 < a < 2 or a == 1:
        raise RegimeError("the closed form covers 0 < alpha < 2, alpha != 1")
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0j
    pref = -params.m_alpha * Gamma(1 - a) / a * params.p_alpha
    val = params.c * params.c_star(v) * np.cos(a * np.pi / 2)
    if params.case == "II":
        return complex(pref * (val - 1j * params.d * params.d_star(v) * np.sin(a * np.pi / 2)))
    return complex(pref * val)


def gamma_correction(v, eta_v_samples, c, sigma):
    """``gamma(v)`` of the ``alpha = 1`` branch.

    The radial integral has the closed form ``-a log|a| + b log|b|`` with
    ``a = <y + v, w>`` and ``b = <y, w>``; the ``eta_v`` integral is a sample mean.
    """
    y = np.atleast_2d(np.asarray(eta_v_samples, dtype=float))
    u, w = _sphere(sigma)
    v = np.asarray(v, dtype=float)

    def xlog(t):
        t = np.abs(t)
        return np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)

    total = 0.0
    for i in range(0, y.shape[0], 8192):
        b = y[i:i + 8192] @ u.T
        a = b + v @ u.T
        term = -np.sign(a) * xlog(a) + np.sign(b) * xlog(b)
        total += np.sum(term @ w)
    return float(c * total / y.shape[0])


def C_alpha_mc(params, v, eta_v_cloud, sigma_star=None, c_star=None, threshold_quantile=0.01):
    """Tail route ``alpha m_alpha Delta_v(Lambda~^1)``; adds ``i gamma(v)`` at ``alpha = 1``.

    ``Delta_v`` is ``c*(v) sigma*_v (x) l^alpha`` with ``sigma*_v`` the angular tail of
    the eta_v cloud (computed here unless given) and ``c*(v)`` from ``params``
    unless given.
    """
    from .tails import angular_tail

    if params.sigma is None:
        raise ValueError("params carry no angular tail measure sigma")
    v = np.asarray(v, dtype=float)
    cs = params.c_star(v) if c_star is None else c_star
    if cs == 0 or not np.any(v):
        return 0j
    if sigma_star is None:
        sigma_star = angular_tail(eta_v_cloud, threshold_quantile)
    u, w = _sphere(sigma_star)
    lam = lambda_tilde(u, params.c, params.sigma, params.alpha)
    val = params.m_alpha * cs * complex(w @ lam)
    if params.alpha == 1:
        val += 1j * gamma_correction(v, _samples(eta_v_cloud), params.c, params.sigma)
    return val


def _samples(cloud):
    return np.asarray(getattr(cloud, "samples", cloud), dtype=float)


def C_alpha_fourier(params, v, eta_v_cloud, with_error=False):
    """Fourier route ``E[Lambda~(Y + v) - Lambda~(Y)]``, ``Y ~ eta_v``; ``+ i gamma(v)`` at alpha = 1.

    ``eta_v_cloud`` must be the cloud of ``Z* v`` for this same ``v``.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return (0j, 0.0) if with_error else 0j
    y = _samples(eta_v_cloud)
    a = min(params.alpha, 2.0)
    diff = (lambda_tilde(y + v, params.c, params.sigma, a)
            - lambda_tilde(y, params.c, params.sigma, a))
    val = complex(diff.mean())
    se = float(np.abs(diff - val).std() / np.sqrt(diff.size))
    if params.alpha == 1:
        val += 1j * gamma_correction(v, y, params.c, params.sigma)
    return (val, se) if with_error else val


def delta_t(eta_cloud, t):
    """``delta(t) = E[t x / (1 + |t x|^2)]``."""
    if t == 0:
        raise ValueError("t must be nonzero")
    x = _samples(eta_cloud) * t
    return (x / (1 + np.sum(x * x, axis=1))[:, None]).mean(axis=0)


@dataclass(frozen=True)
class DeltaBound:
    """``|delta(t)|`` on a panel against ``K |t| |log|t||`` with ``K`` fitted at ``t_fit``."""

    t: np.ndarray
    delta_norm: np.ndarray
    bound: np.ndarray
    K: float

    @property
    def ok(self):
        return bool(np.all(self.delta_norm <= self.bound))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.t, self.delta_norm, self.bound]), delimiter=",",
                   header="t,delta_norm,bound", comments="", fmt="%.17g")


def delta_bound_check(eta_cloud, t_panel=None, t_fit=0.5, safety=4.0):
    """Check ``|delta(t)| <= safety * K |t| |log|t||`` with ``K`` fitted once at ``t_fit``."""
    if t_panel is None:
        t_panel = np.logspace(-4, np.log10(0.5), 17)
    t = np.asarray(t_panel, dtype=float)
    shape = np.abs(t) * np.abs(np.log(np.abs(t)))
    K = np.linalg.norm(delta_t(eta_cloud, t_fit)) / (abs(t_fit) * abs(np.log(abs(t_fit))))
    norms = np.array([np.linalg.norm(delta_t(eta_cloud, x)) for x in t])
    return DeltaBound(t, norms, safety * K * shape, float(K))


def centering(alpha, n, eta_cloud=None, m=None):
    """``d_n``: 0 for alpha < 1, ``n delta(t_n)`` at 1, ``n t_n m`` for 1 < alpha < 2."""
    if not 0 < alpha < 2:
        raise RegimeError("centering is defined for 0 < alpha < 2")
    tn = n ** (-1.0 / alpha)
    if alpha < 1:
        d = _samples(eta_cloud).shape[1] if eta_cloud is not None else len(m)
        return np.zeros(d)
    if alpha == 1:
        return n * delta_t(eta_cloud, tn)
    mean = _samples(eta_cloud).mean(axis=0) if m is None else np.asarray(m, float)
    return n * tn * mean


def covariance_and_mean(eta_cloud, model, alpha=None):
    """Empirical mean ``m`` and covariance ``q`` of eta, and ``z = E M`` exactly."""
    x = _samples(eta_cloud)
    if alpha is not None and alpha <= 2:
        log.warning("covariance requested with alpha = %.3g <= 2; q is not a finite moment", alpha)
    m = x.mean(axis=0)
    q = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
    return m, q, model.mean_linear()


def gaussian_exponent(q, z, v):
    """``q(v, v)/2 + q(v, (I - z*)^{-1} z* v)``; raises if ``z`` is not a contraction."""
    z = np.asarray(z, dtype=float)
    if np.max(np.abs(np.linalg.eigvals(z))) >= 1:
        raise RegimeError("spectral radius of z = E M is >= 1")
    v = np.asarray(v, dtype=float)
    zt = z.T
    w = np.linalg.solve(np.eye(len(v)) - zt, zt @ v)
    return 0.5 * v @ q @ v + v @ q @ w


def limit_cf(params, v, regime=None):
    """Predicted limit characteristic function at ``v``."""
    regime = regime or params.regime
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 1 + 0j
    if regime == "gaussian":
        return complex(np.exp(-gaussian_exponent(params.q, params.z, v)))
    C = params.extra.get("C_fn")
    if C is None:
        if params.alpha == 1 or regime == "log-gaussian":
            raise RegimeError("alpha = 1 and alpha = 2 need a C_fn in params.extra")
        C = lambda w: C_alpha_closed(params, w)  # noqa: E731
    return complex(np.exp(C(v)))


@dataclass(frozen=True)
class CFPanel:
    n: np.ndarray
    v: np.ndarray
    empirical: np.ndarray
    predicted: np.ndarray
    std_err: np.ndarray

    @property
    def abs_deviation(self):
        return np.abs(self.empirical - self.predicted)

    def max_deviation(self, n=None):
        sel = slice(None) if n is None else self.n == n
        return float(self.abs_deviation[sel].max())

    def to_csv(self, path):
        d = self.v.shape[1]
        rows = np.column_stack([self.n, self.v, self.empirical.real, self.empirical.imag,
                                self.predicted.real, self.predicted.imag, self.abs_deviation,
                                self.std_err])
        head = (["n"] + [f"v{i + 1}" for i in range(d)]
                + ["re_empirical", "im_empirical", "re_predicted", "im_predicted",
                   "abs_deviation", "stderr"])
        np.savetxt(path, rows, delimiter=",", header=",".join(head), comments="",
                   fmt=["%d"] + ["%.17g"] * (len(head) - 1))


def normalize_sums(S, n, alpha, x0=None, d_n=None, m=None):
    """Apply the normalization of the limit theorem for the regime of ``alpha``."""
    S = np.asarray(S, dtype=float)
    if alpha > 2:
        return (S - n * np.asarray(m)) / np.sqrt(n)
    if alpha == 2:
        return (S - n * np.asarray(m)) / np.sqrt(n * np.log(n))
    return S * n ** (-1.0 / alpha) - (0 if d_n is None else d_n)


def empirical_vs_limit(model, x0, alpha, n_panel, v_panel, N, seed, params, eta_cloud=None,
                       threads=1):
    """Empirical CFs of the normalized sums against the predicted limit, on a panel."""
    from .simulate import birkhoff_sum_cloud

    n_panel = sorted(int(n) for n in n_panel)
    v_panel = np.atleast_2d(np.asarray(v_panel, dtype=float))
    sums = birkhoff_sum_cloud(model, x0, n_panel[-1], N, seed, checkpoints=n_panel,
                              threads=threads, on_overflow="drop")
    rows_n, rows_v, emp, pred, se = [], [], [], [], []
    predicted = [limit_cf(params, v) for v in v_panel]
    for n in n_panel:
        S = sums[n]
        ok = np.all(np.isfinite(S), axis=1)
        dropped = int((~ok).sum())
        if dropped > 0.001 * N:
            raise FloatingPointError(f"{dropped} of {N} sums overflowed at n = {n}")
        S = S[ok]
        d_n = None
        if alpha < 2 and alpha >= 1:
            d_n = centering(alpha, n, eta_cloud, params.m)
        Y = normalize_sums(S, n, alpha, x0, d_n, params.m)
        phase = np.exp(1j * (Y @ v_panel.T))
        phi = phase.mean(axis=0)
        err = np.sqrt(np.maximum(1 - np.abs(phi) ** 2, 0) / Y.shape[0])
        for j, v in enumerate(v_panel):
            rows_n.append(n)
            rows_v.append(v)
            emp.append(phi[j])
            pred.append(predicted[j])
            se.append(err[j])
    return CFPanel(np.array(rows_n), np.array(rows_v), np.array(emp), np.array(pred),
                   np.array(se))


def stationary_moments(model):
    """Exact mean ``m`` and covariance ``q`` of eta from the moment recursions.

    ``m = (I - E M)^{-1} E Q`` and the second moment solves
    ``S = E[M S M^T] + E[M m Q^T] + E[Q m^T M^T] + E[Q Q^T]``. Requires
    ``kappa(2) < 1``, checked through the spectral radius of ``E[M (x) M]``.
    """
    G, B, w = model.linears, model.translations, model.weights
    d = model.dim
    z = model.mean_linear()
    m = np.linalg.solve(np.eye(d) - z, model.mean_translation())
    K = sum(wi * np.kron(g, g) for wi, g in zip(w, G))
    if np.max(np.abs(np.linalg.eigvals(K))) >= 1:
        raise RegimeError("E[M (x) M] has spectral radius >= 1: eta has no second moment")
    rhs = sum(wi * (np.outer(g @ m, b) + np.outer(b, g @ m) + np.outer(b, b))
              for wi, g, b in zip(w, G, B))
    S = np.linalg.solve(np.eye(d * d) - K, rhs.reshape(-1)).reshape(d, d)
    q = S - np.outer(m, m)
    return m, 0.5 * (q + q.T), z


@dataclass(frozen=True)
class VariancePanel:
    v: np.ndarray
    empirical: np.ndarray
    predicted: np.ndarray
    std_err: np.ndarray
    n: int

    @property
    def rel_deviation(self):
        return np.abs(self.empirical / self.predicted - 1)

    def to_csv(self, path):
        d = self.v.shape[1]
        rows = np.column_stack([np.full(len(self.v), self.n), self.v, self.empirical,
                                self.predicted, self.std_err, self.rel_deviation])
        head = (["n"] + [f"v{i + 1}" for i in range(d)]
                + ["empirical_var", "predicted_var", "stderr", "rel_deviation"])
        np.savetxt(path, rows, delimiter=",", header=",".join(head), comments="",
                   fmt=["%d"] + ["%.17g"] * (len(head) - 1))


def gaussian_variance_panel(model, x0, n, N, seed, v_panel, threads=1):
    """Variance of ``<v, n^{-1/2}(S_n - n m)>`` against ``q(v,v) + 2 q(v, (I - z*)^{-1} z* v)``."""
    from .simulate import birkhoff_sum_cloud

    m, q, z = stationary_moments(model)
    v_panel = np.atleast_2d(np.asarray(v_panel, dtype=float))
    S = birkhoff_sum_cloud(model, x0, n, N, seed, threads=threads)
    Y = (S - n * m) / np.sqrt(n)
    proj = Y @ v_panel.T
    var = proj.var(axis=0)
    # standard error of a sample variance from the fourth central moment
    c = proj - proj.mean(axis=0)
    se = np.sqrt(np.maximum((c**4).mean(axis=0) - var**2, 0) / proj.shape[0])
    pred = np.array([2 * gaussian_exponent(q, z, v) for v in v_panel])
    return VariancePanel(v_panel, var, pred, se, int(n))
