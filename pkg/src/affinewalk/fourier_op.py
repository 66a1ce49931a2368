"""Discretized Fourier operators ``P_v f(x) = E[e^{i<v, Mx+Q>} f(Mx+Q)]``.

Two discretizations are provided. :class:`Lattice` is the uniform square grid
on ``[-R, R]^2`` used for norms, Lasota-Yorke probes and eigenvalues at
moderate ``|v|``. :class:`LogPolarGrid` covers many decades of radius and is
used for the small-``t`` expansion of ``k(tv)``, whose leading term comes from
points at distance about ``1/t``.

Both interpolate inside the grid and extend functions outside it by the
constant-preserving weighted clamp
``f(y) = f(0) + (f(c) - f(0)) ((1 + |y|) / (1 + |c|))^theta`` with ``c`` the
clamped point, so that ``P_0 1 = 1`` holds exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _rng

log = logging.getLogger(__name__)


class InfeasibleParams(ValueError):
    pass


class EigenNonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class HolderParams:
    theta: float
    epsilon: float
    lam: float
    alpha: float

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise InfeasibleParams("; ".join(problems))

    def violations(self):
        t, e, lam, a = self.theta, self.epsilon, self.lam, self.alpha
        out = []
        if not 0 < e < 1:
            out.append("need 0 < epsilon < 1")
        if not 2 * lam + e < a:
            out.append("need 2 lambda + epsilon < alpha")
        if not t <= 2 * lam:
            out.append("need theta <= 2 lambda")
        if not lam + 2 * e < t:
            out.append("need lambda + 2 epsilon < theta")
        if 1 < a < 2 and not 1 + lam + e > a:
            out.append("need 1 + lambda + epsilon > alpha")
        if a == 2 and not lam + 2 * e > 1:
            out.append("need lambda + 2 epsilon > 1")
        if a > 2 and lam != 1:
            out.append("need lambda = 1 when alpha > 2")
        return out


def holder_params_select(alpha):
    """A feasible ``(theta, epsilon, lambda)`` for the weighted Hoelder space."""
    if not alpha > 0:
        raise InfeasibleParams("alpha must be positive")
    eps = min(1.0, alpha) / 8
    if alpha > 2:
        lam = 1.0
        eps = min(eps, (alpha - 2) / 3)
    else:
        lam = (alpha - 2 * eps) * 0.45
        lo = 2 * eps
        if 1 < alpha < 2:
            lo = max(lo, alpha - 1 - eps)
        if alpha == 2:
            lo = max(lo, 1 - 2 * eps)
        hi = (alpha - eps) / 2
        if not lo < lam < hi:
            lam = 0.5 * (lo + hi)
    theta = 0.5 * ((lam + 2 * eps) + 2 * lam)
    return HolderParams(theta, eps, lam, float(alpha))


# grids ------------------------------------------------------------------------


class _Grid:
    """Shared operator assembly: per-atom interpolation matrices, phases applied per ``v``."""

    points: np.ndarray
    origin: int
    theta: float

    def _build(self, model):
        self.model = model
        self._images, self._interp, self.outside_fraction = [], [], 0.0
        n_out = 0
        for g, b in zip(model.linears, model.translations):
            y = self.points @ g.T + b
            A, out = self.interpolation(y)
            self._images.append(y)
            self._interp.append(A)
            n_out += out
        self.outside_fraction = n_out / (len(self._images) * self.points.shape[0])
        if self.outside_fraction > 0.05:
            log.warning("%.1f%% of image points fall outside the grid",
                        100 * self.outside_fraction)

    def operator(self, v):
        """Sparse matrix of ``P_v`` on grid values."""
        v = np.asarray(v, dtype=float)
        P = None
        for w, y, A in zip(self.model.weights, self._images, self._interp):
            term = sparse.diags(w * np.exp(1j * (y @ v))) @ A
            P = term if P is None else P + term
        return P.tocsr()

    def apply(self, v, values):
        return self.operator(v) @ np.asarray(values, dtype=complex)

    def _extend(self, y, c, idx, wts):
        """Constant-preserving weighted clamp rows for points ``y`` clamped to ``c``."""
        ratio = ((1 + np.linalg.norm(y, axis=1)) / (1 + np.linalg.norm(c, axis=1))) ** self.theta
        rows_idx = np.concatenate([idx, np.full((idx.shape[0], 1), self.origin)], axis=1)
        rows_w = np.concatenate([wts * ratio[:, None], (1 - ratio)[:, None]], axis=1)
        return rows_idx, rows_w

    def _matrix(self, idx, wts):
        n = idx.shape[0]
        rows = np.repeat(np.arange(n), idx.shape[1])
        return sparse.csr_matrix((wts.ravel(), (rows, idx.ravel())),
                                 shape=(n, self.points.shape[0]))


class Lattice(_Grid):
    """Uniform lattice ``{-R, -R+h, ..., R}^2``."""

    def __init__(self, model, R=64.0, h=0.25, theta=0.5):
        if model.dim != 2:
            raise ValueError("grid mode needs d = 2")
        self.R, self.h, self.theta = float(R), float(h), float(theta)
        self.n = int(round(2 * R / h)) + 1
        ax = -R + h * np.arange(self.n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        self.points = np.column_stack([X.ravel(), Y.ravel()])
        self.origin = int(np.argmin(np.linalg.norm(self.points, axis=1)))
        self._build(model)

    def interpolation(self, y):
        R, h, n = self.R, self.h, self.n
        c = np.clip(y, -R, R)
        out = np.any(c != y, axis=1)
        u = (c + R) / h
        i0 = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        f = u - i0
        i, j = i0[:, 0], i0[:, 1]
        fx, fy = f[:, 0], f[:, 1]
        idx = np.column_stack([i * n + j, (i + 1) * n + j, i * n + j + 1, (i + 1) * n + j + 1])
        wts = np.column_stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
        if out.any():
            ei, ew = self._extend(y[out], c[out], idx[out], wts[out])
            idx = np.concatenate([idx, np.full((idx.shape[0], 1), self.origin)], axis=1)
            wts = np.concatenate([wts, np.zeros((wts.shape[0], 1))], axis=1)
            idx[out], wts[out] = ei, ew
        return self._matrix(idx, wts), int(out.sum())

    def grid_function(self, values, params=None):
        return GridFunction(np.asarray(values, complex).reshape(self.n, self.n), self.R, self.h,
                            params)


class LogPolarGrid(_Grid):
    """Origin plus ``rings`` log-spaced radii in ``[r_min, r_max]`` times ``angles`` directions."""

    def __init__(self, model, r_min=1e-2, r_max=1e7, per_decade=48, angles=256, theta=0.0):
        if model.dim != 2:
            raise ValueError("grid mode needs d = 2")
        self.r_min, self.r_max, self.theta = float(r_min), float(r_max), float(theta)
        self.rings = int(np.ceil(per_decade * np.log10(r_max / r_min))) + 1
        self.radii = np.geomspace(r_min, r_max, self.rings)
        self.angles = int(angles)
        phi = 2 * np.pi * np.arange(self.angles) / self.angles
        rr, pp = np.meshgrid(self.radii, phi, indexing="ij")
        pts = np.column_stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()])
        self.points = np.vstack([np.zeros((1, 2)), pts])
        self.origin = 0
        self._build(model)

    def interpolation(self, y):
        na, nr = self.angles, self.rings
        r = np.linalg.norm(y, axis=1)
        phi = (np.arctan2(y[:, 1], y[:, 0]) % (2 * np.pi)) * na / (2 * np.pi)
        k0 = np.floor(phi).astype(np.int64) % na
        fk = phi - np.floor(phi)
        k1 = (k0 + 1) % na
        lr = np.log(np.clip(r, self.r_min, self.r_max) / self.r_min) / np.log(
            self.radii[1] / self.radii[0])
        j0 = np.clip(np.floor(lr).astype(np.int64), 0, nr - 2)
        fj = np.clip(lr - j0, 0.0, 1.0)

        def node(j, k):
            return 1 + j * na + k

        idx = np.column_stack([node(j0, k0), node(j0 + 1, k0), node(j0, k1), node(j0 + 1, k1),
                               np.zeros_like(k0)])
        wts = np.column_stack([(1 - fj) * (1 - fk), fj * (1 - fk), (1 - fj) * fk, fj * fk,
                               np.zeros_like(fk)])
        inner = r < self.r_min
        if inner.any():
            s = r[inner] / self.r_min
            wts[inner, :4] = np.column_stack([(1 - fk[inner]), np.zeros(s.size), fk[inner],
                                              np.zeros(s.size)]) * s[:, None]
            wts[inner, 4] = 1 - s
        out = r > self.r_max
        if out.any():
            c = y[out] * (self.r_max / r[out])[:, None]
            ei, ew = self._extend(y[out], c, idx[out, :4], wts[out, :4])
            idx[out], wts[out] = ei, ew
        return self._matrix(idx, wts), int(out.sum())


@dataclass(frozen=True)
class GridFunction:
    """Complex values on the uniform lattice ``[-R, R]^2`` with spacing ``h``."""

    values: np.ndarray
    R: float
    h: float
    params: HolderParams = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square 2-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has NaN/Inf")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def cardinality(self):
        return self.values.size

    def coords(self):
        ax = -self.R + self.h * np.arange(self.n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return X, Y

    @classmethod
    def from_callable(cls, fn, R=64.0, h=0.25, params=None):
        n = int(round(2 * R / h)) + 1
        ax = -R + h * np.arange(n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return cls(fn(np.stack([X, Y], axis=-1)), R, h, params)

    def at_origin(self):
        c = self.n // 2
        return complex(self.values[c, c])


# norms ------------------------------------------------------------------------


@dataclass(frozen=True)
class NormReport:
    norm_theta: float
    seminorm: float
    argmax_theta: tuple
    argmax_pair: tuple

    def __iter__(self):
        return iter((self.norm_theta, self.seminorm))

    @property
    def total(self):
        return self.norm_theta + self.seminorm


def holder_norms(f, params=None, far_pairs=100_000, seed=0):
    """``|f|_theta`` and an approximation of ``[f]_{epsilon, lambda}``.

    The seminorm is the maximum quotient over all nearest-neighbour pairs,
    pairs at dyadic lattice offsets along both axes and ``far_pairs`` random
    pairs.
    """
    p = params or f.params
    if p is None:
        raise ValueError("Hoelder parameters are required")
    if f.n < 2:
        raise ValueError("grid needs at least 2 points")
    X, Y = f.coords()
    rad = np.hypot(X, Y)
    weight = (1 + rad) ** p.lam
    a = np.abs(f.values) / (1 + rad) ** p.theta
    it = np.unravel_index(np.argmax(a), a.shape)
    norm_theta = float(a[it])
    best, arg = 0.0, None
    vals = f.values
    offsets = [(0, 1), (1, 0), (1, 1), (1, -1)]
    k = 2
    while k < f.n:
        offsets += [(0, k), (k, 0)]
        k *= 2
    for di, dj in offsets:
        i0, i1 = max(0, -di), f.n - max(0, di)
        j0, j1 = max(0, -dj), f.n - max(0, dj)
        A = vals[i0:i1, j0:j1]
        B = vals[i0 + di:i1 + di, j0 + dj:j1 + dj]
        dist = f.h * np.hypot(di, dj)
        q = np.abs(A - B) / (dist**p.epsilon * weight[i0:i1, j0:j1]
                             * weight[i0 + di:i1 + di, j0 + dj:j1 + dj])
        m = np.argmax(q)
        if q.flat[m] > best:
            ii, jj = np.unravel_index(m, q.shape)
            best, arg = float(q.flat[m]), ((ii + i0, jj + j0), (ii + i0 + di, jj + j0 + dj))
    if far_pairs:
        rng = _rng.generator(seed, "far-pairs")
        flat = vals.ravel()
        i = rng.integers(0, flat.size, far_pairs)
        j = rng.integers(0, flat.size, far_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
        Xf, Yf, wf = X.ravel(), Y.ravel(), weight.ravel()
        dist = np.hypot(Xf[i] - Xf[j], Yf[i] - Yf[j])
        q = np.abs(flat[i] - flat[j]) / (dist**p.epsilon * wf[i] * wf[j])
        m = int(np.argmax(q))
        if q[m] > best:
            best = float(q[m])
            arg = (np.unravel_index(i[m], vals.shape), np.unravel_index(j[m], vals.shape))
    return NormReport(norm_theta, best, tuple(int(t) for t in it), arg)


# operator applications ----------------------------------------------------------


def apply_Pv(model, v, f, lattice=None):
    """One application of ``P_v`` to a lattice function."""
    lat = lattice or Lattice(model, f.R, f.h, f.params.theta if f.params else 0.0)
    out = lat.apply(v, f.values.ravel())
    return GridFunction(out.reshape(f.values.shape), f.R, f.h, f.params)


@dataclass(frozen=True)
class EigenResult:
    k: complex
    psi: np.ndarray
    iterations: int
    residual_ratio: float
    history: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.k, self.psi))


def dominant_eigen(grid, v, tol=1e-12, iter_max=5000, start=None):
    """Power iteration for ``P_v psi = k psi`` normalized by ``psi(0) = 1``.

    ``grid`` is a :class:`Lattice` or :class:`LogPolarGrid`. The reported
    ``residual_ratio`` is the geometric mean ratio of successive update norms
    over the last iterations, an estimate of ``|second eigenvalue| / |k|``.
    """
    v = np.asarray(v, dtype=float)
    P = grid.operator(v)
    psi = np.ones(grid.points.shape[0], dtype=complex) if start is None else start.copy()
    o = grid.origin
    k_old, hist, steps = np.nan, [], []
    for it in range(1, iter_max + 1):
        new = P @ psi
        k = new[o]
        if k == 0:
            raise EigenNonConvergence("P_v psi vanishes at the origin")
        new /= k
        steps.append(np.max(np.abs(new - psi)))
        psi = new
        hist.append(k)
        if it > 2 and abs(k - k_old) < tol and steps[-1] < max(1e3 * tol, 1e-9):
            break
        k_old = k
    else:
        osc = np.abs(np.diff(hist[-10:])).max() if len(hist) > 10 else np.nan
        raise EigenNonConvergence(f"no convergence in {iter_max} steps; last |dk| = {osc:.3g}")
    s = np.array(steps[-min(20, len(steps)):])
    s = s[s > 0]
    ratio = float(np.exp(np.mean(np.diff(np.log(s))))) if s.size > 2 else 0.0
    return EigenResult(complex(k), psi, it, ratio, np.array(hist))


def lattice_eigen(model, v, R=64.0, h=0.25, theta=0.0, tol=1e-12, iter_max=5000):
    """``dominant_eigen`` on a fresh lattice; returns ``(k, GridFunction)``."""
    lat = Lattice(model, R, h, theta)
    res = dominant_eigen(lat, v, tol, iter_max)
    return res.k, lat.grid_function(res.psi), res


# Lasota-Yorke probe ----------------------------------------------------------------


@dataclass(frozen=True)
class LYTable:
    """Seminorms of iterates; row 0 is ``f = 1``, rows 1.. are random test functions."""

    v: np.ndarray
    n: np.ndarray
    seminorm: np.ndarray  # (trials + 1, n_max + 1)
    norm_theta: np.ndarray
    rho: float
    floor: float
    eigen_floor: float
    fit_ok: bool

    def to_csv(self, path):
        rows = []
        for t in range(self.seminorm.shape[0]):
            for j, n in enumerate(self.n):
                rows.append([t - 1, n, self.seminorm[t, j], self.norm_theta[t, j]])
        np.savetxt(path, np.array(rows), delimiter=",", header="trial,n,seminorm,norm_theta",
                   comments="", fmt=["%d", "%d", "%.17g", "%.17g"])


def random_trig_polynomial(lat, params, seed, terms=6, max_freq=2.0):
    """Random ``sum a_k e^{i<xi_k, x>}`` scaled to unit weighted-Hoelder norm."""
    rng = _rng.generator(seed, "trig-poly")
    xi = rng.uniform(-max_freq, max_freq, size=(terms, 2))
    a = rng.standard_normal(terms) + 1j * rng.standard_normal(terms)
    vals = np.exp(1j * lat.points @ xi.T) @ a
    f = lat.grid_function(vals, params)
    return lat.grid_function(vals / holder_norms(f, far_pairs=20_000, seed=seed).total, params)


def lasota_yorke_probe(model, v, params, n_max=30, trials=4, R=32.0, h=0.25, seed=0,
                       lattice=None, far_pairs=20_000, k_abs=None):
    """Seminorms of ``P_v^n f`` for ``f = 1`` and random unit-norm test functions.

    For ``f = 1`` the seminorm of ``f`` vanishes, so the inequality bounds
    ``[P_v^n 1]`` by the ``C_2 |v|^epsilon`` term alone; ``floor`` is the
    maximum over ``n >= 1``. The random functions are fitted as
    ``[P^n f] = A rho^n + F |k|^n`` with ``|k|`` the dominant eigenvalue
    modulus (passed in or computed); ``eigen_floor`` is ``F``.
    """
    from scipy.optimize import curve_fit

    lat = lattice or Lattice(model, R, h, params.theta)
    P = lat.operator(v)
    if k_abs is None:
        k_abs = abs(dominant_eigen(lat, v, tol=1e-10).k)
    sem = np.empty((trials + 1, n_max + 1))
    nth = np.empty_like(sem)
    for t in range(trials + 1):
        if t == 0:
            x = np.ones(lat.points.shape[0], dtype=complex)
        else:
            x = random_trig_polynomial(lat, params, _rng.stream_key(seed, f"ly{t}")).values.ravel()
        for n in range(n_max + 1):
            rep = holder_norms(lat.grid_function(x, params), far_pairs=far_pairs, seed=n)
            sem[t, n], nth[t, n] = rep.seminorm, rep.norm_theta
            x = P @ x
    ns = np.arange(n_max + 1)
    y = sem[1:].max(axis=0)

    def model_fn(n, A, rho, F):
        return A * rho**n + F * k_abs**n

    try:
        popt, _ = curve_fit(model_fn, ns, y, p0=(y[0], 0.5, y[-1] / max(k_abs**n_max, 1e-300)),
                            bounds=([0, 0, 0], [np.inf, 1, np.inf]), maxfev=20000)
        A, rho, F = popt
        ok = True
    except RuntimeError:
        A, rho, F, ok = np.nan, np.nan, np.nan, False
    return LYTable(np.asarray(v, float), ns, sem, nth, float(rho), float(sem[0, 1:].max()),
                   float(F), ok)


def floor_exponent(tables):
    """Least-squares slope of ``log floor`` against ``log |v|``."""
    r = np.array([np.linalg.norm(t.v) for t in tables])
    F = np.array([t.floor for t in tables])
    slope, _ = np.polyfit(np.log(r), np.log(F), 1)
    return float(slope)


# eigenvalue expansion -------------------------------------------------------------


def k_via_eigenfunctional(t, v, eta_cloud, eta_v_cloud):
    """``k(tv)`` from ``(k - 1) eta(psi) = eta(psi (X_tv - 1))`` with ``psi = eta_v^(t .)``.

    With independent ``R ~ eta`` and ``Y ~ eta_v`` the double integrals are
    plain means of ``e^{it<R, Y + v>} - e^{it<R, Y>}`` and ``e^{it<R, Y>}``.
    Returns ``(k, std_err)`` with a delta-method error.
    """
    R = np.asarray(getattr(eta_cloud, "samples", eta_cloud), dtype=float)
    Y = np.asarray(getattr(eta_v_cloud, "samples", eta_v_cloud), dtype=float)
    n = min(R.shape[0], Y.shape[0])
    R, Y = R[:n], Y[:n]
    v = np.asarray(v, dtype=float)
    base = np.exp(1j * t * np.sum(R * Y, axis=1))
    num = base * (np.exp(1j * t * (R @ v)) - 1)
    den = base
    a, b = num.mean(), den.mean()
    k = 1 + a / b
    infl = (num - a) / b - a * (den - b) / b**2
    se = float(np.sqrt(np.mean(np.abs(infl) ** 2) / n))
    return complex(k), se


@dataclass(frozen=True)
class ExpansionReport:
    t: np.ndarray
    k: np.ndarray
    k_err: np.ndarray
    ratio: np.ndarray
    compensation: np.ndarray
    slope: float
    limit: complex
    target: complex
    exponent: float
    drift: np.ndarray = None
    k_alt: np.ndarray = None
    k_alt_err: np.ndarray = None

    @property
    def deviation(self):
        return abs(self.limit - self.target) / abs(self.target)

    def to_csv(self, path):
        n = self.t.size
        alt = self.k_alt if self.k_alt is not None else np.full(n, np.nan + 0j)
        rows = np.column_stack([self.t, self.k.real, self.k.imag, self.k_err, self.ratio.real,
                                self.ratio.imag, np.full(n, self.slope),
                                np.full(n, self.target.real), np.full(n, self.target.imag),
                                np.full(n, self.deviation), alt.real, alt.imag])
        head = ("t,re_k,im_k,k_err,re_ratio,im_ratio,slope_fit,re_target,im_target,deviation,"
                "re_k_alt,im_k_alt")
        np.savetxt(path, rows, delimiter=",", header=head, comments="", fmt="%.17g")


def expansion_terms(t, v, alpha, m=None, delta=None):
    """Compensation and scale of the branch of the small-``t`` expansion of ``k(tv)``.

    Returns ``(compensation, scale)`` so that ``(k(tv) - 1 - compensation) / scale``
    tends to the branch limit.
    """
    v = np.asarray(v, dtype=float)
    if alpha < 1:
        return 0j, t**alpha
    if alpha == 1:
        return 1j * float(v @ delta(t)), t
    comp = 1j * t * float(v @ m)
    if alpha < 2:
        return comp, t**alpha
    if alpha == 2:
        return comp, t * t * abs(np.log(t))
    return comp, t * t


def grid_stationary_mean(grid, tol=1e-13, iter_max=100_000):
    """Mean of the one-step images under the stationary law of the discretized chain.

    This is the drift the discrete ``P_v`` sees at first order in ``v``;
    compensating with it instead of the exact ``m`` keeps first-order
    discretization error out of the ``t^2`` branches.
    """
    P0 = grid.operator(np.zeros(2)).real.T.tocsr()
    pi = np.zeros(grid.points.shape[0])
    pi[grid.origin] = 1.0
    for _ in range(iter_max):
        new = P0 @ pi
        if np.abs(new - pi).sum() < tol:
            pi = new
            break
        pi = new
    else:
        raise EigenNonConvergence("stationary law of the discretized chain did not converge")
    return sum(w * (pi @ y) for w, y in zip(grid.model.weights, grid._images))


def k_expansion_check(model, v, alpha, target, t_panel=None, m=None, delta=None, grid=None,
                      reference_grid=None, eta_cloud=None, eta_v_cloud=None, tol=1e-13):
    """Eigenvalue expansion of ``k(tv)`` at ``t -> 0`` against a predicted limit.

    ``target`` is ``C_alpha(v)`` (or ``2 C_2(v)``, ``C_{2+}(v)`` in the other
    branches). The limit is a second-order Richardson extrapolation from the
    three smallest ``t``, removing the ``t^beta`` and ``t^(2 beta)`` corrections
    with ``beta = min(alpha, |1 - alpha|, 1)`` for ``alpha < 2`` and
    ``beta = 1`` otherwise. ``reference_grid`` (optional, usually coarser)
    gives the discretization error as the change of ``k`` between the grids.
    For ``alpha > 1`` the drift compensation uses ``m`` when given and the
    discretized chain's own stationary mean otherwise.
    """
    if t_panel is None:
        t_panel = 2.0 ** -np.arange(4, 11)
    t_panel = np.sort(np.asarray(t_panel, dtype=float))[::-1]
    if t_panel.size < 4:
        raise ValueError("need at least 4 values of t")
    grid = grid or LogPolarGrid(model, r_max=1e4 / t_panel.min(), per_decade=48, angles=256)
    v = np.asarray(v, dtype=float)
    if alpha > 1 and m is None:
        m = grid_stationary_mean(grid)
    ks, errs, ratios, comps, alts, alt_errs = [], [], [], [], [], []
    start = None
    for t in t_panel:
        res = dominant_eigen(grid, t * v, tol=tol, start=start)
        start = res.psi
        err = 0.0
        if reference_grid is not None:
            err = abs(dominant_eigen(reference_grid, t * v, tol=tol).k - res.k)
        comp, scale = expansion_terms(t, v, alpha, m, delta)
        ks.append(res.k)
        errs.append(err)
        comps.append(comp)
        ratios.append((res.k - 1 - comp) / scale)
        if eta_cloud is not None and eta_v_cloud is not None:
            ka, ea = k_via_eigenfunctional(t, v, eta_cloud, eta_v_cloud)
            alts.append(ka)
            alt_errs.append(ea)
    ks, ratios, comps = np.array(ks), np.array(ratios), np.array(comps)
    dev = np.abs(ks - 1 - comps)
    slope = float(np.polyfit(np.log(t_panel), np.log(dev), 1)[0])
    beta = min(alpha, abs(1 - alpha), 1.0) if alpha < 2 else 1.0
    if beta <= 0:
        beta = 1.0
    x = t_panel[-3:] ** beta
    limit = np.linalg.solve(np.vander(x, 3), ratios[-3:])[-1]
    return ExpansionReport(t_panel, ks, np.array(errs), ratios, comps, slope, complex(limit),
                           complex(target), float(beta),
                           None if m is None else np.asarray(m, float),
                           np.array(alts) if alts else None,
                           np.array(alt_errs) if alt_errs else None)
