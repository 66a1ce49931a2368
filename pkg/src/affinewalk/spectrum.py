"""Growth spectrum of random matrix products.

``kappa(s) = lim (E ||M_n ... M_1||^s)^(1/n)``, the Lyapunov exponent, the
tail index ``alpha`` with ``kappa(alpha) = 1`` and ``m_alpha = kappa'(alpha-)``.

Estimates at different ``s`` share one set of sampled products (common random
numbers), so differences and roots in ``s`` are far less noisy than the
individual values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _rng
from .simulate import REFRESH_EVERY, _opnorm

log = logging.getLogger(__name__)

DEFAULT_N = 8
DEFAULT_SAMPLES = 200_000
MIN_EFFECTIVE = 10.0


class NoSignChange(ValueError):
    """``log kappa`` does not change sign on the requested bracket."""


@dataclass(frozen=True)
class KappaPoint:
    s: float
    log_kappa: float
    std_err: float
    n: int
    effective_samples: float

    @property
    def unstable(self):
        return self.effective_samples < MIN_EFFECTIVE

    @property
    def kappa(self):
        return float(np.exp(self.log_kappa))

    def __iter__(self):
        # unpacks as (log_kappa, std_err)
        return iter((self.log_kappa, self.std_err))


class ProductSample:
    """Log-norms of N sampled products ``M_n ... M_1`` and of their ``n//2`` prefixes."""

    def __init__(self, model, n=DEFAULT_N, N=DEFAULT_SAMPLES, seed=0):
        if n < 2:
            raise ValueError("n must be >= 2")
        self.n, self.N, self.half = int(n), int(N), int(n) // 2
        self.scalar = model.dim == 1
        if self.scalar:
            # norms are multiplicative in d = 1: kappa(s) = E|M|^s and every factor is a sample
            self.log_full = _factor_lognorms(model, self.n, self.N, seed)
            self.log_half = None
        else:
            self.log_full, self.log_half = _product_lognorms(model, self.n, self.half, self.N,
                                                             seed)

    def _est(self, s, lognorms, length):
        # (1/length) log mean ||P||^s and per-sample influence on it
        z = s * lognorms
        lse = logsumexp(z)
        w = np.exp(z - lse) * z.size
        est = (lse - np.log(z.size)) / length
        return est, (w - 1.0) / length, w

    def point(self, s, richardson=True):
        if s < 0:
            raise ValueError("s must be >= 0")
        if s == 0:
            return KappaPoint(0.0, 0.0, 0.0, self.n, float(self.N))
        if self.scalar:
            est, infl, w = self._est(s, self.log_full, 1)
            return KappaPoint(float(s), float(est), float(np.std(infl) / np.sqrt(infl.size)),
                              1, float(w.sum() ** 2 / np.sum(w * w)))
        e1, i1, w = self._est(s, self.log_full, self.n)
        if richardson:
            e2, i2, _ = self._est(s, self.log_half, self.half)
            est, infl = 2.0 * e1 - e2, 2.0 * i1 - i2
        else:
            est, infl = e1, i1
        se = float(np.std(infl) / np.sqrt(self.N))
        ess = float(w.sum() ** 2 / np.sum(w * w))
        if ess < MIN_EFFECTIVE:
            log.warning("kappa(%g): moment dominated by %.1f samples (heavy-tail-unstable)", s, ess)
        return KappaPoint(float(s), float(est), se, self.n, ess)

    def log_kappa(self, s, richardson=True):
        return self.point(s, richardson).log_kappa

    def kappa_derivative(self, s, h):
        """Second-order backward difference of ``kappa`` at ``s``."""
        if s - 2 * h <= 0:
            raise ValueError("need s - 2h > 0")
        k0, k1, k2 = (np.exp(self.log_kappa(x)) for x in (s, s - h, s - 2 * h))
        return float((3 * k0 - 4 * k1 + k2) / (2 * h))


class TwistedKappa:
    """``kappa(s)`` as the stationary mass of the twisted kernel (planar models).

    Deterministic; the reported error is the change under grid doubling.
    """

    def __init__(self, model, grid_size=512):
        from . import projective

        self._proj = projective
        self.model, self.m = model, int(grid_size)
        self._cache = {}

    def _mass(self, s, m):
        key = (float(s), m)
        if key not in self._cache:
            self._cache[key] = self._proj.stationary_angular(self.model, s, m).kappa
        return self._cache[key]

    def point(self, s, richardson=True):
        if s == 0:
            return KappaPoint(0.0, 0.0, 0.0, 0, np.inf)
        k = self._mass(s, self.m)
        err = abs(np.log(self._mass(s, 2 * self.m)) - np.log(k))
        return KappaPoint(float(s), float(np.log(k)), float(err), 0, np.inf)

    def log_kappa(self, s, richardson=True):
        return float(np.log(self._mass(s, self.m))) if s else 0.0

    def kappa_derivative(self, s, h):
        k0, k1, k2 = (self._mass(x, self.m) for x in (s, s - h, s - 2 * h))
        return float((3 * k0 - 4 * k1 + k2) / (2 * h))


def kappa_evaluator(model, method="mc", budgets=None):
    """``ProductSample`` (``method="mc"``) or ``TwistedKappa`` (``"twisted"``, d = 2)."""
    b = {"n": DEFAULT_N, "N": DEFAULT_SAMPLES, "seed": 0, "grid_size": 512, **(budgets or {})}
    if method == "mc":
        return ProductSample(model, b["n"], b["N"], b["seed"])
    if method == "twisted":
        return TwistedKappa(model, b["grid_size"])
    raise ValueError(f"unknown kappa method {method!r}")


def _product_lognorms(model, n, half, N, seed):
    key = _rng.stream_key(seed, "kappa")
    G, d = model.linears, model.dim
    out_full = np.empty(N)
    out_half = np.empty(N)
    chunk = 1 << 16
    for start in range(0, N, chunk):
        ids = np.arange(start, min(start + chunk, N), dtype=np.uint64)
        P = np.broadcast_to(np.eye(d), (ids.size, d, d)).copy()
        acc = np.zeros(ids.size)
        for k in range(1, n + 1):
            a = _rng.choose(key, ids, k, model.cumweights)
            P = G[a] @ P
            if k % REFRESH_EVERY == 0 or k in (half, n):
                nrm = _opnorm(P)
                with np.errstate(divide="ignore"):
                    acc += np.log(nrm)
                P /= np.where(nrm > 0, nrm, 1.0)[:, None, None]
                if k == half:
                    out_half[ids.astype(np.int64)] = acc
        out_full[ids.astype(np.int64)] = acc
    return out_full, out_half


def _factor_lognorms(model, n, N, seed):
    """``log |M|`` for the ``N n`` factors of the sampled products (d = 1)."""
    key = _rng.stream_key(seed, "kappa")
    logs = np.log(np.abs(model.linears[:, 0, 0]))
    ids = np.arange(N, dtype=np.uint64)
    return np.concatenate([logs[_rng.choose(key, ids, k, model.cumweights)]
                           for k in range(1, n + 1)])


def kappa_estimate(model, s, n=DEFAULT_N, N=DEFAULT_SAMPLES, seed=0):
    """Richardson-extrapolated ``log kappa(s)`` with a delta-method standard error."""
    if s == 0:
        return KappaPoint(0.0, 0.0, 0.0, int(n), float(N))
    return ProductSample(model, n, N, seed).point(s)


@dataclass(frozen=True)
class KappaCurve:
    s: np.ndarray
    log_kappa: np.ndarray
    std_err: np.ndarray
    n_used: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s grid must be strictly ascending")

    def to_csv(self, path):
        rows = np.column_stack([self.s, self.log_kappa, self.std_err, self.n_used])
        np.savetxt(path, rows, delimiter=",", header="s,log_kappa,std_err,n_used",
                   comments="", fmt=["%.17g", "%.17g", "%.17g", "%d"])


def kappa_curve(model, grid, n=DEFAULT_N, N=DEFAULT_SAMPLES, seed=0):
    grid = np.asarray(grid, dtype=float)
    ps = ProductSample(model, n, N, seed)
    pts = [ps.point(s) for s in grid]
    return KappaCurve(grid, np.array([p.log_kappa for p in pts]),
                      np.array([p.std_err for p in pts]), np.full(grid.size, ps.n))


class ConvexityResult(tuple):
    """``(ok, violating_index)``; truthy when the curve is strictly convex."""

    def __new__(cls, ok, index=None):
        return super().__new__(cls, (bool(ok), index))

    def __bool__(self):
        return self[0]


def convexity_check(curve):
    if curve.s.size < 4:
        raise ValueError("need at least 4 grid points")
    s, y, se = curve.s, curve.log_kappa, curve.std_err
    h1, h2 = np.diff(s)[:-1], np.diff(s)[1:]
    # divided second differences, scaled to a uniform-grid second difference
    d2 = 2 * ((y[2:] - y[1:-1]) / h2 - (y[1:-1] - y[:-2]) / h1) / (h1 + h2) * h1 * h2
    prop = np.sqrt(se[:-2] ** 2 + 4 * se[1:-1] ** 2 + se[2:] ** 2)
    floor = np.where(prop > 0, -2 * prop, 1e-12 * (1 + np.abs(y[1:-1])))
    bad = np.flatnonzero(~(d2 > floor))
    if bad.size:
        return ConvexityResult(False, int(bad[0]) + 1)
    return ConvexityResult(True)


def lyapunov_estimate(model, n=100_000, seed=0, block=100):
    """Top Lyapunov exponent from one long product, with a block-bootstrap SE."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    nb = n // block
    n = nb * block
    G, d = model.linears, model.dim
    a = _rng.choose(_rng.stream_key(seed, "lyapunov"), np.arange(n, dtype=np.uint64), 0,
                    model.cumweights).reshape(nb, block)
    # per-block products, computed across blocks in parallel
    B = np.broadcast_to(np.eye(d), (nb, d, d)).copy()
    scale = np.zeros(nb)
    for j in range(block):
        B = G[a[:, j]] @ B
        if (j + 1) % 16 == 0:
            nrm = _opnorm(B)
            scale += np.log(nrm)
            B /= nrm[:, None, None]
    P = np.eye(d)
    incr = np.empty(nb)
    for j in range(nb):
        P = B[j] @ P
        nrm = np.linalg.norm(P, 2) if d > 1 else abs(P[0, 0])
        incr[j] = np.log(nrm) + scale[j]
        P /= nrm
    L = incr.sum() / n
    rng = _rng.generator(seed, "lyapunov-bootstrap")
    boot = incr[rng.integers(0, nb, size=(200, nb))].sum(axis=1) / n
    return float(L), float(np.std(boot))


@dataclass(frozen=True)
class TailIndex:
    alpha: float
    ci: tuple
    std_err: float
    log_kappa_at_alpha: float
    samples: object

    def __iter__(self):
        return iter((self.alpha, self.ci))


def tail_index(model, s_lo=0.05, s_hi=8.0, tol=1e-4, budgets=None, samples=None, method="mc"):
    """Root of ``log kappa(s) = 0`` by bisection on a fixed product sample.

    ``samples`` may be any evaluator from :func:`kappa_evaluator`.
    """
    ps = samples or kappa_evaluator(model, method, budgets)
    f_lo, f_hi = ps.log_kappa(s_lo), ps.log_kappa(s_hi)
    if not (f_lo < 0 < f_hi):
        raise NoSignChange("no sign change: alpha outside [%g, %g] or model not in the "
                           "negative-drift heavy-tail regime (log kappa = %.4g, %.4g)"
                           % (s_lo, s_hi, f_lo, f_hi))
    lo, hi = s_lo, s_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ps.log_kappa(mid) < 0:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    pt = ps.point(alpha)
    h = max(1e-3, 0.02 * alpha)
    slope = (ps.log_kappa(alpha) - ps.log_kappa(alpha - h)) / h
    se = pt.std_err / slope if slope > 0 else np.inf
    if not np.isfinite(se):
        log.warning("log kappa is not increasing at alpha = %g", alpha)
    half = 2.0 * se + tol
    return TailIndex(alpha, (alpha - half, alpha + half), float(se), pt.log_kappa, ps)


def kappa_derivative(model, alpha, h=None, budgets=None, samples=None, method="mc"):
    """``m_alpha = kappa'(alpha-)`` from a left stencil on common random numbers."""
    if h is None:
        h = 0.05 * alpha if method == "mc" and samples is None else 1e-3 * alpha
    if alpha - h <= 0:
        raise ValueError("alpha - h must be > 0")
    ps = samples or kappa_evaluator(model, method, budgets)
    if alpha - 2 * h <= 0:
        return float((np.exp(ps.log_kappa(alpha)) - np.exp(ps.log_kappa(alpha - h))) / h)
    return ps.kappa_derivative(alpha, h)
