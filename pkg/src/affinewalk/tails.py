"""Tail homogeneity of stationary clouds and the tail constants ``c``, ``c_+-``, ``c*(v)``.

Two estimators of ``c`` are provided. The direct one reads the flat part of
the dyadic column ``alpha 2^(k alpha) P(|R| >= 2^k)``. The renewal one uses the
coupled pair ``(R, R - Q)``: ``c = E[f_alpha(R) - f_alpha(R - Q)] / m_alpha``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .projective import AngularMeasure, CaseII, GRID_SIZE
from .simulate import companion_series

MIN_EXCEEDANCES = 50
FLAT_RATIO = 1.5
FLAT_RUN = 3


class InsufficientTailData(ValueError):
    pass


class HomogeneityNotReached(ValueError):
    pass


class InconsistentSpectrum(ValueError):
    pass


@dataclass(frozen=True)
class TailProfile:
    k: np.ndarray
    levels: np.ndarray
    survival: np.ndarray
    normalized: np.ndarray
    std_err: np.ndarray
    exceedances: np.ndarray
    alpha: float
    N: int

    @property
    def reliable(self):
        return self.exceedances >= MIN_EXCEEDANCES

    @property
    def A_hat(self):
        """Max/min ratio of the normalized column over reliable levels."""
        y = self.normalized[self.reliable]
        return float(y.max() / y.min())

    def flat_run(self):
        """Index slice of the longest run of >= 3 reliable levels with ratios within 1.5.

        Ties go to the run at higher levels. Returns ``None`` if no run exists.
        """
        best = None
        rel = self.reliable
        y = self.normalized
        n = y.size
        for i in range(n):
            if not rel[i] or y[i] <= 0:
                continue
            lo = hi = y[i]
            j = i
            while j + 1 < n and rel[j + 1] and y[j + 1] > 0:
                lo2, hi2 = min(lo, y[j + 1]), max(hi, y[j + 1])
                if hi2 / lo2 > FLAT_RATIO:
                    break
                lo, hi, j = lo2, hi2, j + 1
            length = j - i + 1
            if length >= FLAT_RUN and (best is None or length >= best.stop - best.start):
                best = slice(i, j + 1)
        return best

    def to_csv(self, path):
        rows = np.column_stack([self.k, self.levels, self.survival, self.normalized,
                                self.std_err, self.reliable.astype(int)])
        np.savetxt(path, rows, delimiter=",", header="k,level,survival,normalized,stderr,reliable",
                   comments="", fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g", "%d"])


def _norms(cloud):
    x = getattr(cloud, "samples", cloud)
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x.reshape(x.shape[0], -1), axis=1)


def dyadic_profile(cloud, alpha, k_range=None, subdivisions=8):
    """Empirical survival at levels ``2^k`` and the normalized column ``2^(k alpha) survival``.

    The normalized value of level ``k`` is averaged over ``subdivisions``
    log-uniform points of the octave ``[2^k, 2^(k+1))``. This removes the
    log-periodic ripple that lattice-type models show at any fixed phase; with
    ``subdivisions=1`` the column is the plain dyadic one. A level counts as
    reliable when the top of its octave still has 50 exceedances.
    """
    r = np.sort(_norms(cloud))
    N = r.size
    if k_range is None:
        pos = r[r > 0]
        if pos.size == 0:
            raise InsufficientTailData("insufficient tail data: the cloud is concentrated at 0")
        k_lo = int(np.floor(np.log2(np.median(pos))))
        k_hi = int(np.ceil(np.log2(pos[-1])))
        k_range = (k_lo, max(k_hi, k_lo + 1))
    k = np.arange(k_range[0], k_range[1] + 1)
    levels = np.exp2(k.astype(float))
    frac = np.arange(subdivisions) / subdivisions
    sub = k[:, None] + frac[None, :]
    counts = N - np.searchsorted(r, np.exp2(sub), side="left")
    top = N - np.searchsorted(r, np.exp2(k + 1.0), side="left")
    surv = counts[:, 0] / N
    p = counts / N
    scale = np.exp2(sub * alpha)
    normalized = (scale * p).mean(axis=1)
    # the sub-level counts are nested, so their errors are close to fully correlated
    std_err = (scale * np.sqrt(p * (1 - p) / N)).mean(axis=1)
    prof = TailProfile(k, levels, surv, normalized, std_err,
                       top if subdivisions > 1 else counts[:, 0],
                       float(alpha), N)
    if prof.reliable.sum() < 2:
        raise InsufficientTailData("insufficient tail data: fewer than 2 levels with "
                                   f"{MIN_EXCEEDANCES} exceedances")
    return prof


@dataclass(frozen=True)
class Estimate:
    value: float
    ci: tuple
    std_err: float
    detail: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.value, self.ci))

    def __float__(self):
        return self.value


def tail_constant_direct(cloud, alpha, profile=None):
    """``c = alpha * lim t^alpha P(|R| >= t)`` from the flat run of the dyadic column."""
    prof = profile or dyadic_profile(cloud, alpha)
    run = prof.flat_run()
    if run is None:
        raise HomogeneityNotReached("homogeneity not reached at this sample size: no run of "
                                    f"{FLAT_RUN} reliable levels within ratio {FLAT_RATIO}")
    y, se = prof.normalized[run], prof.std_err[run]
    ks = prof.k[run]
    # trim leading levels that are still approaching the plateau
    while y.size > FLAT_RUN:
        w = 1.0 / se[1:] ** 2
        rest = np.sum(w * y[1:]) / w.sum()
        if abs(y[0] - rest) <= 3 * np.hypot(se[0], se[1:].min()):
            break
        y, se, ks = y[1:], se[1:], ks[1:]
    w = 1.0 / se**2
    mean = float(np.sum(w * y) / w.sum())
    # nested exceedance sets are positively correlated; use the least favourable level SE
    sem = float(max(np.sqrt(1.0 / w.sum()), se.min()))
    c, c_se = alpha * mean, alpha * sem
    return Estimate(c, (c - 2 * c_se, c + 2 * c_se), c_se,
                    {"levels": ks.tolist(), "method": "direct"})


def _renewal(values, m_alpha):
    if not m_alpha > 0:
        raise InconsistentSpectrum(f"m_alpha = {m_alpha} must be positive")
    N = values.size
    c = float(values.mean() / m_alpha)
    se = float(values.std() / np.sqrt(N) / m_alpha)
    return Estimate(c, (c - 2 * se, c + 2 * se), se, {"method": "renewal"})


def tail_constant_renewal(model, alpha, m_alpha, profile, paired):
    """``c = E[f_alpha(R) - f_alpha(R - Q)] / m_alpha`` on coupled clouds."""
    eta, eta_prime = paired
    diff = profile.f(eta.samples) - profile.f(eta_prime.samples)
    return _renewal(diff, m_alpha)


def c_plus_renewal(model, alpha, m_alpha, e_plus_profile, paired, case=None, reflect=False):
    """``c_+`` with ``f_{alpha,+}``; ``reflect=True`` gives ``c_-`` via the antipodal profile."""
    if case is not None and not isinstance(case, CaseII):
        raise ValueError("the c_+- decomposition is defined in case II only")
    eta, eta_prime = paired
    sign = -1.0 if reflect else 1.0
    diff = e_plus_profile.f(sign * eta.samples) - e_plus_profile.f(sign * eta_prime.samples)
    return _renewal(diff, m_alpha)


def angular_tail(cloud, threshold_quantile=0.01, grid_size=GRID_SIZE, symmetrized=False):
    """Empirical law of ``x / |x|`` over the top ``threshold_quantile`` of norms."""
    x = np.asarray(getattr(cloud, "samples", cloud), dtype=float)
    r = np.linalg.norm(x, axis=1)
    cut = np.quantile(r, 1 - threshold_quantile)
    top = x[r > cut]
    if top.shape[0] < 500:
        raise InsufficientTailData(f"only {top.shape[0]} exceedances above the threshold; "
                                   "need 500")
    u = top / np.linalg.norm(top, axis=1)[:, None]
    if x.shape[1] != 2:
        return AngularMeasure(u, np.full(u.shape[0], 1.0 / u.shape[0]), symmetrized)
    span = np.pi if symmetrized else 2 * np.pi
    ang = np.arctan2(u[:, 1], u[:, 0]) % span
    idx = np.rint(ang / span * grid_size).astype(np.int64) % grid_size
    w = np.bincount(idx, minlength=grid_size).astype(float)
    return AngularMeasure.on_grid(w / w.sum(), symmetrized)


@dataclass(frozen=True)
class TailConstants:
    c: float
    c_ci: tuple
    method: str
    case: str
    c_plus: float = float("nan")
    c_minus: float = float("nan")
    c_plus_ci: tuple = (float("nan"), float("nan"))
    c_minus_ci: tuple = (float("nan"), float("nan"))

    @property
    def d(self):
        return self.c_plus - self.c_minus

    def to_json(self):
        out = asdict(self)
        out["d"] = self.d
        return json.dumps(out, sort_keys=True, indent=1)


@dataclass(frozen=True)
class CompanionConstant:
    v: np.ndarray
    c_star: float
    d_star: float
    ci: tuple
    std_err: float
    profile: TailProfile = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.c_star, self.d_star, self.ci))


def companion_tail_constant(model, v, alpha, budgets=None, case=None, series=None):
    """``c*(v)`` from the tail of the ``Z* v`` cloud; ``d*(v)`` via the cone split in case II.

    Passing a precomputed :class:`~affinewalk.simulate.CompanionSeries` reuses
    the same matrices for every ``v``.
    """
    b = {"N": 1_000_000, "seed": 0, "trunc_tol": 1e-10, "k_max": 10_000, **(budgets or {})}
    v = np.asarray(v, dtype=float)
    if series is None:
        series = companion_series(model, b["trunc_tol"], b["k_max"], b["seed"], b["N"])
    cloud = series.cloud(v)
    prof = dyadic_profile(cloud, alpha)
    est = tail_constant_direct(cloud, alpha, prof)
    d_star = 0.0
    if isinstance(case, CaseII):
        if cloud.dim == 1:
            side = cloud.samples[:, 0]
        else:
            start, width = case.transpose_arc
            mid = start + width / 2
            side = cloud.samples @ np.array([np.cos(mid), np.sin(mid)])
        parts = []
        for mask in (side > 0, side < 0):
            y = cloud.samples * mask[:, None]
            try:
                parts.append(tail_constant_direct(y, alpha).value)
            except (InsufficientTailData, HomogeneityNotReached):
                parts.append(0.0)
        d_star = parts[0] - parts[1]
    return CompanionConstant(v, est.value, d_star, est.ci, est.std_err, prof)
