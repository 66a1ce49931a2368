"""Twisted kernel on directions: ``nu_s``, ``nu*_s``, ``p(s)``, ``e_s`` and the cone dichotomy.

In the plane a direction is an angle. Projective measures live on a uniform
grid of ``[0, pi)``; spherical ones (needed when an invariant cone exists) on a
grid of ``[0, 2 pi)``. Pushing a grid point through a matrix lands between two
grid points and its mass is split linearly between them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _rng

log = logging.getLogger(__name__)

GRID_SIZE = 512
PARTICLES = 100_000
TABLE_SIZE = 8192


class ConvergenceError(RuntimeError):
    pass


class DegenerateGeometry(ValueError):
    pass


@dataclass(frozen=True)
class AngularMeasure:
    """Weighted point measure on unit vectors.

    ``symmetrized`` marks a projective measure (``x`` and ``-x`` identified);
    for ``d = 2`` the support is then a grid of ``[0, pi)``.
    """

    support: np.ndarray
    weights: np.ndarray
    symmetrized: bool = True

    def __post_init__(self):
        u = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if u.ndim != 2 or w.shape != (u.shape[0],):
            raise ValueError("support must be (m, d) and weights (m,)")
        if np.any(np.abs(np.linalg.norm(u, axis=1) - 1) > 1e-12):
            raise ValueError("support vectors must be unit norm")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-10:
            raise ValueError("weights must be nonnegative and sum to 1")
        for a in (u, w):
            a.setflags(write=False)
        object.__setattr__(self, "support", u)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.support.shape[1]

    @property
    def angles(self):
        if self.dim != 2:
            raise ValueError("angles are defined for d = 2 only")
        return np.arctan2(self.support[:, 1], self.support[:, 0]) % (
            np.pi if self.symmetrized else 2 * np.pi)

    @classmethod
    def on_grid(cls, weights, symmetrized=True):
        m = len(weights)
        span = np.pi if symmetrized else 2 * np.pi
        phi = span * np.arange(m) / m
        return cls(np.column_stack([np.cos(phi), np.sin(phi)]), weights, symmetrized)

    @classmethod
    def uniform(cls, m=GRID_SIZE, symmetrized=True):
        return cls.on_grid(np.full(m, 1.0 / m), symmetrized)

    @classmethod
    def point_mass(cls, x):
        x = np.asarray(x, dtype=float)
        return cls((x / np.linalg.norm(x))[None, :], np.ones(1), True)

    def integrate(self, fn):
        return np.sum(self.weights * fn(self.support))

    def reflected(self):
        return AngularMeasure(-self.support, self.weights, self.symmetrized)

    def to_csv(self, path):
        if self.dim == 2:
            rows = np.column_stack([self.angles, self.weights])
            header = "angle,weight"
        else:
            rows = np.column_stack([self.support, self.weights])
            header = ",".join([f"u{i + 1}" for i in range(self.dim)] + ["weight"])
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")


def _grid_size(measure):
    return measure.support.shape[0]


def _is_grid(measure):
    if measure.dim != 2:
        return False
    m = _grid_size(measure)
    span = np.pi if measure.symmetrized else 2 * np.pi
    return m > 1 and np.allclose(measure.angles, span * np.arange(m) / m, atol=1e-12)


def twisted_matrix(model, s, m=GRID_SIZE, symmetrized=True, transpose=False):
    """Sparse ``m x m`` matrix of the twisted kernel acting on grid measures."""
    if model.dim != 2:
        raise ValueError("grid mode needs d = 2")
    if s < 0:
        raise ValueError("s must be >= 0")
    span = np.pi if symmetrized else 2 * np.pi
    h = span / m
    phi = h * np.arange(m)
    x = np.column_stack([np.cos(phi), np.sin(phi)])
    G = np.transpose(model.linears, (0, 2, 1)) if transpose else model.linears
    rows, cols, vals = [], [], []
    for w, g in zip(model.weights, G):
        y = x @ g.T
        r = np.linalg.norm(y, axis=1)
        if np.any(r == 0):
            raise DegenerateGeometry("kernel undefined at x: a singular atom maps it to 0")
        u = (np.arctan2(y[:, 1], y[:, 0]) % span) / h
        j0 = np.floor(u).astype(np.int64)
        frac = u - j0
        j0 %= m
        wt = w * r**s
        rows += [j0, (j0 + 1) % m]
        cols += [np.arange(m)] * 2
        vals += [wt * (1 - frac), wt * frac]
    T = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    return T


def twisted_apply(model, s, measure):
    """Push a measure through the twisted kernel: returns ``(normalized, mass)``."""
    if _is_grid(measure):
        T = twisted_matrix(model, s, _grid_size(measure), measure.symmetrized)
        new = T @ measure.weights
        mass = new.sum()
        return AngularMeasure.on_grid(new / mass, measure.symmetrized), float(mass)
    # arbitrary support: one weighted image point per (support point, atom)
    pts, wts = [], []
    for w, g in zip(model.weights, model.linears):
        y = measure.support @ g.T
        r = np.linalg.norm(y, axis=1)
        if np.any(r == 0):
            raise DegenerateGeometry("kernel undefined at x: a singular atom maps it to 0")
        pts.append(y / r[:, None])
        wts.append(measure.weights * w * r**s)
    wts = np.concatenate(wts)
    mass = wts.sum()
    return AngularMeasure(np.concatenate(pts), wts / mass, measure.symmetrized), float(mass)


@dataclass(frozen=True)
class StationaryAngular:
    measure: AngularMeasure
    kappa: float
    iterations: int
    residual: float

    def __iter__(self):
        return iter((self.measure, self.kappa))


def stationary_angular(model, s, grid_size=GRID_SIZE, tol=1e-11, iter_max=20000,
                       transpose=False, symmetrized=True, start=None, seed=0):
    """Power iteration for the eigenmeasure of the twisted kernel and its mass ``kappa(s)``."""
    if model.dim != 2:
        return _stationary_particles(model, s, tol, iter_max, transpose, seed)
    T = twisted_matrix(model, s, grid_size, symmetrized, transpose)
    nu = np.full(grid_size, 1.0 / grid_size) if start is None else np.asarray(start, float)
    nu = nu / nu.sum()
    mass, tv = np.nan, np.inf
    for it in range(1, iter_max + 1):
        new = T @ nu
        mass = new.sum()
        new /= mass
        tv = 0.5 * np.abs(new - nu).sum()
        nu = new
        if tv < tol:
            break
    else:
        raise ConvergenceError(f"twisted power iteration did not converge in {iter_max} "
                               f"steps (final TV change {tv:.3g})")
    return StationaryAngular(AngularMeasure.on_grid(nu, symmetrized), float(mass), it, float(tv))


def _stationary_particles(model, s, tol, iter_max, transpose, seed, n=PARTICLES):
    d = model.dim
    G = np.transpose(model.linears, (0, 2, 1)) if transpose else model.linears
    rng = _rng.generator(seed, "particles")
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1)[:, None]
    masses = []
    for it in range(1, iter_max + 1):
        a = rng.choice(len(model.weights), size=n, p=model.weights)
        y = np.einsum("nij,nj->ni", G[a], x)
        r = np.linalg.norm(y, axis=1)
        wt = r**s
        masses.append(wt.mean())
        # systematic resampling
        c = np.cumsum(wt / wt.sum())
        idx = np.minimum(np.searchsorted(c, (rng.random() + np.arange(n)) / n), n - 1)
        x = (y / r[:, None])[idx]
        if it >= 50 and it % 10 == 0:
            recent = np.array(masses[-20:])
            old = np.array(masses[-40:-20])
            if abs(np.log(recent.mean() / old.mean())) < max(tol, 5 * recent.std() / np.sqrt(20)):
                break
    kappa = float(np.exp(np.mean(np.log(masses[len(masses) // 2:]))))
    x = x * np.where(x[:, :1] < 0, -1.0, 1.0)
    return StationaryAngular(AngularMeasure(x, np.full(n, 1.0 / n), True), kappa, it, np.nan)


@dataclass(frozen=True)
class EigenFunctionProfile:
    """``e_s`` (or ``e_{s,+}``) tabulated on a grid, evaluated by interpolation."""

    s: float
    p: float
    grid: AngularMeasure  # evaluation grid; weights are those of the normalizing measure
    values: np.ndarray
    kernel_support: np.ndarray = field(repr=False, default=None)
    kernel_weights: np.ndarray = field(repr=False, default=None)
    positive_part: bool = False

    def exact(self, x, chunk=4096):
        """Evaluate on directions ``x`` (shape (n, d)) by direct summation."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x = x / np.linalg.norm(x, axis=1)[:, None]
        out = np.empty(x.shape[0])
        for i in range(0, x.shape[0], chunk):
            ip = x[i:i + chunk] @ self.kernel_support.T
            ip = np.maximum(ip, 0.0) if self.positive_part else np.abs(ip)
            out[i:i + chunk] = (ip**self.s) @ self.kernel_weights / self.p
        return out

    def __call__(self, x):
        """Evaluate on directions ``x``; planar profiles interpolate a fine angular table."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != 2:
            return self.exact(x)
        period = 2 * np.pi if self.positive_part else np.pi
        phi, table = self._table(period)
        ang = np.arctan2(x[:, 1], x[:, 0]) % period
        return np.interp(ang, phi, table, period=period)

    def _table(self, period, size=TABLE_SIZE):
        cached = self.__dict__.get("_cached_table")
        if cached is None:
            phi = period * np.arange(size) / size
            cached = (phi, self.exact(np.column_stack([np.cos(phi), np.sin(phi)])))
            object.__setattr__(self, "_cached_table", cached)
        return cached

    def f(self, v):
        """``f_s(v) = e_s(v / |v|) |v|^s``; zero at the origin."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        r = np.linalg.norm(v, axis=1)
        out = np.zeros(v.shape[0])
        nz = r > 0
        out[nz] = self(v[nz]) * r[nz] ** self.s
        return out

    def to_csv(self, path):
        rows = np.column_stack([self.grid.angles, self.values])
        np.savetxt(path, rows, delimiter=",", header="angle,e", comments="", fmt="%.17g")


def _profile(nu, kernel, s, positive):
    ip = nu.support @ kernel.support.T
    ip = np.maximum(ip, 0.0) if positive else np.abs(ip)
    raw = (ip**s) @ kernel.weights
    p = float(nu.weights @ raw)
    if p < 1e-12:
        raise DegenerateGeometry(f"p(s) = {p:.3g} is numerically zero")
    return EigenFunctionProfile(float(s), p, nu, raw / p, kernel.support, kernel.weights, positive)


def p_and_e(nu_s, nu_star_s, s):
    """``p(s) = int int |<x, y>|^s dnu_s dnu*_s`` and ``e_s(x) = int |<x, y>|^s dnu*_s / p(s)``."""
    if nu_s.dim != nu_star_s.dim:
        raise ValueError("measures live in different dimensions")
    prof = _profile(nu_s, nu_star_s, s, False)
    check = nu_s.weights @ prof.values
    if abs(check - 1) > 1e-8:
        raise DegenerateGeometry(f"normalization nu_s(e_s) = {check!r}")
    return prof


def e_plus(sigma_prime, s, sigma_plus=None):
    """``e_{s,+}(x) = int <x, y>_+^s dsigma'_s(y) / p``, normalized so that ``sigma_+(e_{s,+}) = 1``.

    Without ``sigma_plus`` the normalization is taken against ``sigma_prime``
    itself.
    """
    return _profile(sigma_plus or sigma_prime, sigma_prime, s, True)


def eigenfunction_check(model, profile, kappa_s, test_points=256, seed=0):
    """Max relative residual of ``sum_i w_i f_s(g_i v) = kappa(s) f_s(v)`` over test vectors."""
    if np.isscalar(test_points):
        rng = _rng.generator(seed, "eigencheck")
        v = rng.standard_normal((int(test_points), model.dim))
        v *= rng.uniform(0.5, 2.0, size=(v.shape[0], 1)) / np.linalg.norm(v, axis=1)[:, None]
    else:
        v = np.atleast_2d(np.asarray(test_points, dtype=float))
    lhs = sum(w * profile.f(v @ g.T) for w, g in zip(model.weights, model.linears))
    rhs = kappa_s * profile.f(v)
    keep = rhs > 1e-300
    return float(np.max(np.abs(lhs[keep] - rhs[keep]) / rhs[keep]))


@dataclass(frozen=True)
class CaseI:
    max_arc_degrees: float

    name = "I"


@dataclass(frozen=True)
class CaseII:
    """Invariant cone found; ``arc = (start, width)`` in radians covers the orbit."""

    arc: tuple
    transpose_arc: tuple

    name = "II"


def _covering_arc(angles):
    a = np.sort(angles % (2 * np.pi))
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    j = int(np.argmax(gaps))
    start = a[(j + 1) % a.size]
    return float(start), float(2 * np.pi - gaps[j])


def _orbit_arc(G, weights, trials, steps, burn, rng):
    d = G.shape[1]
    x = rng.standard_normal((trials, d))
    x /= np.linalg.norm(x, axis=1)[:, None]
    widest, arcs = 0.0, []
    hist = []
    for k in range(steps):
        a = rng.choice(len(weights), size=trials, p=weights)
        x = np.einsum("nij,nj->ni", G[a], x)
        x /= np.linalg.norm(x, axis=1)[:, None]
        if k >= burn:
            hist.append(np.arctan2(x[:, 1], x[:, 0]))
    hist = np.array(hist)
    for t in range(trials):
        start, width = _covering_arc(hist[:, t])
        arcs.append((start, width))
        widest = max(widest, width)
    return widest, arcs


def cone_case_detect(model, trials=8, steps=10_000, max_arc_degrees=178.0, seed=0):
    """Heuristic case detection from angular orbits of random directions."""
    if model.dim != 2:
        raise ValueError("cone detection is implemented for d = 2")
    rng = _rng.generator(seed, "cone")
    burn = min(100, steps // 10)
    lim = np.deg2rad(max_arc_degrees)
    w1, arcs = _orbit_arc(model.linears, model.weights, trials, steps, burn, rng)
    w2, tarcs = _orbit_arc(np.transpose(model.linears, (0, 2, 1)), model.weights, trials, steps,
                           burn, rng)
    if w1 <= lim and w2 <= lim:
        # report the arc that contains the positive-first-coordinate side
        pick = max(arcs, key=lambda a: np.cos(a[0] + a[1] / 2))
        tpick = max(tarcs, key=lambda a: np.cos(a[0] + a[1] / 2))
        return CaseII(pick, tpick)
    return CaseI(float(np.rad2deg(max(w1, w2))))


def sigma_prime(model, s, case, grid_size=GRID_SIZE, transpose=False, **kw):
    """The spherical stationary measure supported in the invariant cone (case II).

    Of the two cone-supported solutions the one with nonnegative barycenter
    first coordinate is returned.
    """
    if not isinstance(case, CaseII):
        raise ValueError("sigma' is defined in case II only")
    start, width = case.transpose_arc if transpose else case.arc
    phi = 2 * np.pi * np.arange(grid_size) / grid_size
    inside = ((phi - start) % (2 * np.pi)) <= width + 2 * np.pi / grid_size
    init = inside.astype(float)
    res = stationary_angular(model, s, grid_size, transpose=transpose, symmetrized=False,
                             start=init, **kw)
    mu = res.measure
    if mu.weights @ mu.support[:, 0] < 0:
        # the reflected solution sits on the regular grid shifted by half a turn
        w = np.roll(mu.weights, grid_size // 2)
        mu = AngularMeasure.on_grid(w, False)
    return StationaryAngular(mu, res.kappa, res.iterations, res.residual)


def alpha_profile(model, s, grid_size=GRID_SIZE):
    """``e_s`` from the stationary measures of the model and of its transpose.

    One-dimensional models have ``e_s = 1`` and ``p(s) = 1``.
    """
    if model.dim == 1:
        one = AngularMeasure(np.ones((1, 1)), np.ones(1), True)
        return p_and_e(one, one, s)
    nu = stationary_angular(model, s, grid_size).measure
    nu_star = stationary_angular(model, s, grid_size, transpose=True).measure
    return p_and_e(nu, nu_star, s)
