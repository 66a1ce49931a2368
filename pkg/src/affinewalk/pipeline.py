"""Stages of a run: each computes one group of quantities and writes its artifacts.

A :class:`Run` holds the model, the configuration and lazily computed shared
objects (tail index, clouds, profiles), so a full pipeline samples every
cloud once. All randomness derives from the config seed through named
sub-seeds, and every artifact is a deterministic function of the config.
"""

from __future__ import annotations

import hashlib
import json
import logging
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import _rng
from . import fourier_op as fo
from . import projective as pj
from . import simulate as sim
from . import spectrum as sp
from . import stablelaw as st
from . import tails as tl
from .config import ConfigError
from .model import condition_report

log = logging.getLogger(__name__)


class ConditionFailure(RuntimeError):
    def __init__(self, report):
        super().__init__("; ".join(report.reasons) or "condition check failed")
        self.report = report


def subseed(seed, name):
    return int(_rng.stream_key(seed, name))


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path, obj):
    text = json.dumps(obj, sort_keys=True, indent=1, default=_plain, allow_nan=True)
    Path(path).write_text(text + "\n")


def cx(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def tune_rho(spec, alpha_target, grid_size=512, tol=1e-12):
    """``rho`` with ``kappa(alpha_target) = 1`` for the golden family (twisted-kernel mass)."""

    def f(rho):
        return np.log(pj.stationary_angular(spec.model(rho), alpha_target, grid_size).kappa)

    lo, hi = 1e-3, 0.5
    if f(lo) >= 0:
        raise ConfigError(f"golden: alpha target {alpha_target} unreachable; (1 - p) "
                          f"lambda^alpha >= 1 already")
    while f(hi) < 0:
        hi *= 1.5
        if hi > 1e3:
            raise ConfigError("golden: no rho reaches the alpha target")
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


class Run:
    def __init__(self, cfg, model, out=None):
        self.cfg, self.model = cfg, model
        self.out = Path(out or cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.b = cfg.budgets
        self.seed = cfg.seed
        self.threads = cfg.threads

    def path(self, name):
        return self.out / name

    def sub(self, name):
        return subseed(self.seed, name)

    # shared objects ---------------------------------------------------------

    @cached_property
    def planar(self):
        return self.model.dim == 2

    @cached_property
    def kappa_mc(self):
        return sp.ProductSample(self.model, self.b["kappa_n"], self.b["kappa_N"],
                                self.sub("kappa"))

    @cached_property
    def kappa_twisted(self):
        return sp.TwistedKappa(self.model, self.b["grid_size"]) if self.planar else None

    @cached_property
    def tail_index(self):
        ev = self.kappa_twisted or self.kappa_mc
        tol = 1e-9 if self.planar else 1e-4
        return sp.tail_index(self.model, 0.05, 8.0, tol, samples=ev)

    @property
    def alpha(self):
        return self.tail_index.alpha

    @cached_property
    def m_alpha(self):
        if self.planar:
            return sp.kappa_derivative(self.model, self.alpha, samples=self.kappa_twisted,
                                       method="twisted")
        return sp.kappa_derivative(self.model, self.alpha, h=0.05 * self.alpha,
                                   samples=self.kappa_mc)

    @cached_property
    def case(self):
        if self.planar:
            return pj.cone_case_detect(self.model, seed=self.sub("cone"))
        if np.all(self.model.linears[:, 0, 0] > 0):
            return pj.CaseII((0.0, 0.0), (0.0, 0.0))
        return pj.CaseI(180.0)

    @cached_property
    def profile(self):
        return pj.alpha_profile(self.model, self.alpha, self.b["grid_size"])

    @cached_property
    def nu(self):
        if not self.planar:
            return None
        return pj.stationary_angular(self.model, self.alpha, self.b["grid_size"])

    @cached_property
    def nu_star(self):
        if not self.planar:
            return None
        return pj.stationary_angular(self.model, self.alpha, self.b["grid_size"], transpose=True)

    def _series_kw(self):
        return dict(trunc_tol=self.b["trunc_tol"], k_max=self.b["k_max"], N=self.b["N_samples"],
                    threads=self.threads)

    @cached_property
    def paired(self):
        return sim.paired_eta_etaprime_sample(self.model, seed=self.sub("eta"), **self._series_kw())

    @property
    def eta(self):
        return self.paired[0]

    @cached_property
    def companion(self):
        return sim.companion_series(self.model, seed=self.sub("companion"), **self._series_kw())

    @cached_property
    def eta_profile(self):
        return tl.dyadic_profile(self.eta, self.alpha)

    @cached_property
    def c_direct(self):
        return tl.tail_constant_direct(self.eta, self.alpha, self.eta_profile)

    @cached_property
    def c_renewal(self):
        return tl.tail_constant_renewal(self.model, self.alpha, self.m_alpha, self.profile,
                                        self.paired)

    @cached_property
    def symmetric(self):
        return isinstance(self.case, pj.CaseI)

    @cached_property
    def sigma_hat(self):
        """Angular tail of eta; projective (symmetrized) in case I, where Lambda is symmetric."""
        return tl.angular_tail(self.eta, symmetrized=self.symmetric,
                               grid_size=self.b["grid_size"])

    @cached_property
    def c_plus_minus(self):
        if self.symmetric or not self.planar:
            return None
        spp = pj.sigma_prime(self.model, self.alpha, self.case, self.b["grid_size"]).measure
        spt = pj.sigma_prime(self.model, self.alpha, self.case, self.b["grid_size"],
                             transpose=True).measure
        ep = pj.e_plus(spt, self.alpha, spp)
        cp = tl.c_plus_renewal(self.model, self.alpha, self.m_alpha, ep, self.paired, self.case)
        cm = tl.c_plus_renewal(self.model, self.alpha, self.m_alpha, ep, self.paired, self.case,
                               reflect=True)
        return cp, cm

    def c_star_unit(self, u):
        """``c*`` on a unit vector, cached on the rounded direction."""
        key = tuple(np.round(np.asarray(u, float), 12))
        cache = self.__dict__.setdefault("_cstar", {})
        if key not in cache:
            cache[key] = tl.companion_tail_constant(self.model, np.array(key), self.alpha,
                                                    case=self.case, series=self.companion)
        return cache[key]

    def c_star(self, v):
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        return self.c_star_unit(v / r).c_star * r**self.alpha

    def d_star(self, v):
        v = np.asarray(v, dtype=float)
        r = np.linalg.norm(v)
        return self.c_star_unit(v / r).d_star * r**self.alpha

    @cached_property
    def stable_params(self):
        a = self.alpha
        if a > 2:
            m, q, z = st.stationary_moments(self.model)
            return st.StableParams(a, max(self.m_alpha, 1e-300), float("nan"), float("nan"),
                                   m=m, q=q, z=z)
        c = self.c_renewal.value
        d = 0.0
        case = "I" if self.symmetric else "II"
        if not self.symmetric:
            cp, cm = self.c_plus_minus if self.c_plus_minus else (self.c_renewal, None)
            d = cp.value - (cm.value if cm is not None else 0.0)
        params = st.StableParams(a, self.m_alpha, c, self.profile.p, case, self.c_star, d,
                                 self.d_star, self.sigma_hat, m=self.eta.samples.mean(axis=0))
        if a == 1 or not 0 < a < 2:
            params.extra["C_fn"] = lambda v: st.C_alpha_fourier(params, v, self.companion.cloud(v))
        return params

    def C_alpha(self, v):
        """Headline ``C_alpha(v)``: the closed form where available, else the Fourier route."""
        p = self.stable_params
        if p.regime == "gaussian":
            return complex(-st.gaussian_exponent(p.q, p.z, v))
        if "C_fn" in p.extra:
            return complex(p.extra["C_fn"](v))
        return st.C_alpha_closed(p, v)

    def directions(self, k=None):
        k = k or self.cfg.stable["directions"]
        ang = 2 * np.pi * np.arange(k) / k
        return np.column_stack([np.cos(ang), np.sin(ang)]) if self.planar else \
            np.array([[1.0], [-1.0]])[: max(1, min(k, 2))]


# stages ---------------------------------------------------------------------


def stage_model_check(run):
    write_json(run.path("model.json"), run.model.to_dict())
    rep = condition_report(run.model, {"seed": run.sub("condition")})
    write_json(run.path("condition.json"), rep.to_dict())
    if not rep.ok:
        raise ConditionFailure(rep)
    return rep.to_dict()


def stage_spectrum(run):
    a = run.alpha
    grid = run.cfg.spectrum.get("s_grid") or list(a * np.array([0.25, 0.5, 0.75, 1.0, 1.25, 1.5]))
    grid = np.asarray(grid, dtype=float)
    ps = run.kappa_mc
    pts = [ps.point(s) for s in grid]
    curve = sp.KappaCurve(grid, np.array([p.log_kappa for p in pts]),
                          np.array([p.std_err for p in pts]), np.full(grid.size, ps.n))
    curve.to_csv(run.path("kappa_curve.csv"))
    L, L_se = sp.lyapunov_estimate(run.model, seed=run.sub("lyapunov"))
    out = {
        "alpha": a,
        "alpha_ci": run.tail_index.ci,
        "alpha_method": "twisted" if run.planar else "mc",
        "m_alpha": run.m_alpha,
        "lyapunov": L,
        "lyapunov_se": L_se,
        "convex": bool(sp.convexity_check(curve)) if grid.size >= 4 else None,
        "unstable_s": [p.s for p in pts if p.unstable],
    }
    if run.planar:
        tw = np.array([np.exp(run.kappa_twisted.log_kappa(s)) for s in grid])
        mc = np.exp(curve.log_kappa)
        rows = np.column_stack([grid, mc, np.exp(curve.log_kappa) * curve.std_err, tw,
                                np.abs(mc - tw)])
        np.savetxt(run.path("kappa_crosscheck.csv"), rows, delimiter=",",
                   header="s,kappa_mc,kappa_mc_stderr,kappa_twisted,abs_diff", comments="",
                   fmt="%.17g")
        try:
            mc_idx = sp.tail_index(run.model, 0.05, 8.0, 1e-4, samples=ps)
            out["alpha_mc"], out["alpha_mc_ci"] = mc_idx.alpha, mc_idx.ci
        except sp.NoSignChange as exc:
            out["alpha_mc"], out["alpha_mc_error"] = None, str(exc)
    write_json(run.path("spectrum.json"), out)
    return out


def stage_simulate(run, write_clouds=True):
    eta, eta_prime = run.paired
    cloud_v = run.companion.cloud(np.eye(run.model.dim)[0])
    if write_clouds:
        eta.to_csv(run.path("eta.csv"))
        eta_prime.to_csv(run.path("eta_prime.csv"))
        cloud_v.to_csv(run.path("eta_v_e1.csv"))
    qs = [0.5, 0.9, 0.99, 0.999, 0.9999]
    out = {
        "eta": {**eta.meta, "norm_quantiles": dict(zip(map(str, qs), np.quantile(eta.norms, qs)))},
        "companion": {**run.companion.meta,
                      "norm_quantiles_e1": dict(zip(map(str, qs), np.quantile(cloud_v.norms, qs)))},
    }
    write_json(run.path("simulate.json"), out)
    return out


def stage_projective(run):
    a = run.alpha
    out = {"alpha": a, "case": run.case.name, "p_alpha": run.profile.p}
    if run.planar:
        run.nu.measure.to_csv(run.path("nu_alpha.csv"))
        run.nu_star.measure.to_csv(run.path("nu_star_alpha.csv"))
        run.profile.to_csv(run.path("e_alpha.csv"))
        out.update({
            "kappa_alpha": run.nu.kappa,
            "iterations": run.nu.iterations,
            "eigenfunction_residual": pj.eigenfunction_check(run.model, run.profile, run.nu.kappa,
                                                             seed=run.sub("eigencheck")),
        })
        if isinstance(run.case, pj.CaseII):
            out["arc"], out["transpose_arc"] = run.case.arc, run.case.transpose_arc
        else:
            out["max_arc_degrees"] = run.case.max_arc_degrees
    write_json(run.path("projective.json"), out)
    return out


def stage_tails(run):
    a = run.alpha
    run.eta_profile.to_csv(run.path("eta_profile.csv"))
    cd, cr = run.c_direct, run.c_renewal
    cons = tl.TailConstants(cr.value, cr.ci, "renewal", run.case.name)
    if run.c_plus_minus:
        cp, cm = run.c_plus_minus
        cons = tl.TailConstants(cr.value, cr.ci, "renewal", run.case.name, cp.value, cm.value,
                                cp.ci, cm.ci)
    run.path("tail_constants.json").write_text(cons.to_json() + "\n")
    dirs = run.directions()
    stars = [run.c_star_unit(u) for u in dirs]
    stars[0].profile.to_csv(run.path("companion_profile.csv"))
    rows = np.column_stack([dirs, [s.c_star for s in stars], [s.std_err for s in stars],
                            [s.d_star for s in stars]])
    head = [f"v{i + 1}" for i in range(dirs.shape[1])] + ["c_star", "stderr", "d_star"]
    np.savetxt(run.path("companion_constants.csv"), rows, delimiter=",", header=",".join(head),
               comments="", fmt="%.17g")
    if run.planar:
        run.sigma_hat.to_csv(run.path("sigma_hat.csv"))
    # homogeneity and symmetry of c*: one independent companion series per vector, since a
    # shared series makes c*(2v) = 2^alpha c*(v) hold by construction
    u = dirs[0]
    homog = {}
    for name, vec in (("v", u), ("2v", 2 * u), ("-v", -u)):
        ser = sim.companion_series(run.model, seed=run.sub(f"companion[{name}]"),
                                   **run._series_kw())
        homog[name] = tl.companion_tail_constant(run.model, vec, a, case=run.case, series=ser)
    rows = np.array([[*h.v, h.c_star, h.std_err] for h in homog.values()])
    np.savetxt(run.path("companion_homogeneity.csv"), rows, delimiter=",",
               header=",".join([f"v{i + 1}" for i in range(len(u))] + ["c_star", "stderr"]),
               comments="", fmt="%.17g")
    cv = homog["v"].c_star
    out = {
        "homogeneity_ratio": homog["2v"].c_star / cv,
        "homogeneity_target": 2.0**a,
        "symmetry_ratio": homog["-v"].c_star / cv,
        "alpha": a,
        "c_direct": cd.value, "c_direct_ci": cd.ci, "c_direct_levels": cd.detail["levels"],
        "c_renewal": cr.value, "c_renewal_ci": cr.ci,
        "A_hat": run.eta_profile.A_hat,
        "relative_gap": abs(cd.value - cr.value) / cr.value,
        "case": run.case.name,
    }
    write_json(run.path("tails.json"), out)
    return out


def cf_magnitudes(run):
    """Panel magnitudes: ``|C_alpha(r e_1)|`` hits the configured targets."""
    given = run.cfg.stable.get("magnitudes")
    if given:
        return np.asarray(given, dtype=float)
    e1 = np.eye(run.model.dim)[0]
    C1 = abs(run.C_alpha(e1).real)
    expo = 2.0 if run.alpha > 2 else run.alpha
    return np.array([(t / C1) ** (1 / expo) for t in run.cfg.stable["C_targets"]])


def stage_stable(run):
    a = run.alpha
    params = run.stable_params
    dirs = run.directions()
    routes = []
    if params.regime == "gaussian":
        for u in dirs:
            routes.append({"v": u, "C_2plus": cx(run.C_alpha(u))})
    else:
        if not run.planar:
            raise ConfigError("the three-route comparison is implemented for d = 2")
        raw = tl.angular_tail(run.eta, symmetrized=False, grid_size=run.b["grid_size"])
        for u in dirs:
            cloud = run.companion.cloud(u)
            sig_star = tl.angular_tail(cloud, symmetrized=run.symmetric,
                                       grid_size=run.b["grid_size"])
            row = {"v": u, "c_star": run.c_star(u)}
            if a != 1:
                row["closed"] = cx(st.C_alpha_closed(params, u))
            row["mc"] = cx(st.C_alpha_mc(params, u, cloud, sigma_star=sig_star))
            val, se = st.C_alpha_fourier(params, u, cloud, with_error=True)
            row["fourier"], row["fourier_se"] = cx(val), se
            # imaginary part the Fourier route shows with the unsymmetrized empirical tail
            raw_params = st.StableParams(a, params.m_alpha, params.c, params.p_alpha,
                                         params.case, params.c_star, sigma=raw)
            row["fourier_raw_sigma"] = cx(st.C_alpha_fourier(raw_params, u, cloud))
            vals = [complex(row[k]["re"], row[k]["im"]) for k in ("closed", "mc", "fourier")
                    if k in row]
            row["max_pairwise_rel"] = max(abs(x - y) / max(abs(x), abs(y))
                                          for i, x in enumerate(vals) for y in vals[i + 1:])
            routes.append(row)
    mags = cf_magnitudes(run)
    v_panel = np.array([r * u for r in mags for u in dirs])
    x0 = run.cfg.stable.get("x0") or np.zeros(run.model.dim)
    n_panel = run.cfg.stable["n_panel"]
    N = run.cfg.stable["N"]
    out = {"alpha": a, "regime": params.regime, "routes": routes, "magnitudes": mags}
    db = st.delta_bound_check(run.eta)
    db.to_csv(run.path("delta_bound.csv"))
    out["delta_bound"] = {"K": db.K, "ok": db.ok,
                          "max_ratio": float(np.max(db.delta_norm / db.bound))}
    if params.regime == "gaussian":
        n = max(n_panel)
        vp = st.gaussian_variance_panel(run.model, x0, n, N, run.sub("birkhoff"), dirs,
                                        run.threads)
        vp.to_csv(run.path("variance_panel.csv"))
        out["variance_max_rel_deviation"] = float(vp.rel_deviation.max())
    panel = st.empirical_vs_limit(run.model, x0, a, n_panel, v_panel, N, run.sub("birkhoff"),
                                  params, eta_cloud=run.eta, threads=run.threads)
    panel.to_csv(run.path("cf_panel.csv"))
    out["cf_max_deviation"] = {str(n): panel.max_deviation(n) for n in sorted(set(panel.n))}
    write_json(run.path("stable.json"), out)
    return out


def stage_operator(run):
    if not run.planar:
        raise ConfigError("the operator stage needs d = 2")
    a = run.alpha
    oc = run.cfg.operator
    params = fo.holder_params_select(a)
    lat = fo.Lattice(run.model, oc["lattice_R"], oc["lattice_h"], params.theta)
    e1 = np.array([1.0, 0.0])
    eig0 = fo.dominant_eigen(lat, np.zeros(2))
    eig = []
    for r in oc["v_norms"]:
        res = fo.dominant_eigen(lat, r * e1, tol=1e-12)
        eig.append({"v_norm": r, "k": cx(res.k), "abs_k": abs(res.k),
                    "iterations": res.iterations, "residual_ratio": res.residual_ratio})
    ly_lat = fo.Lattice(run.model, oc["ly_R"], oc["lattice_h"], params.theta)
    tables = []
    for i, r in enumerate(oc["v_norms"]):
        k_abs = eig[i]["abs_k"]
        t = fo.lasota_yorke_probe(run.model, r * e1, params, oc["ly_n_max"], oc["ly_trials"],
                                  seed=run.sub("ly"), lattice=ly_lat, k_abs=k_abs)
        t.to_csv(run.path(f"lasota_yorke_{i}.csv"))
        tables.append(t)
    t_panel = 2.0 ** -np.asarray(oc["t_exponents"], dtype=float)
    r_max = 1e4 / t_panel.min()
    grid = fo.LogPolarGrid(run.model, r_max=r_max, per_decade=oc["per_decade"],
                           angles=oc["angles"])
    # coarser reference grid: the change of k between the two bounds the discretization error
    ref = fo.LogPolarGrid(run.model, r_max=r_max, per_decade=max(2, 2 * oc["per_decade"] // 3),
                          angles=max(8, oc["angles"] // 2))
    params_st = run.stable_params
    delta = (lambda t: st.delta_t(run.eta, t)) if a == 1 else None
    # the discretized chain's own drift is used; the exact or sampled mean is recorded beside it
    m_ref = params_st.m if a > 1 else None
    if a > 2:
        target = run.C_alpha(e1)
    elif a == 2:
        target = 2 * run.C_alpha(e1)
    else:
        target = run.C_alpha(e1)
    rep = fo.k_expansion_check(run.model, e1, a, target, t_panel, m=None, delta=delta, grid=grid,
                               reference_grid=ref, eta_cloud=run.eta,
                               eta_v_cloud=run.companion.cloud(e1))
    rep.to_csv(run.path("expansion.csv"))
    combined = np.hypot(rep.k_err, rep.k_alt_err)
    out = {
        "params": {"theta": params.theta, "epsilon": params.epsilon, "lambda": params.lam},
        "lattice_outside_fraction": lat.outside_fraction,
        "k0": cx(eig0.k), "psi0_max_dev": float(np.max(np.abs(eig0.psi - 1))),
        "eigen": eig,
        "ly_rho": [t.rho for t in tables],
        "ly_floor": [t.floor for t in tables],
        "ly_eigen_floor": [t.eigen_floor for t in tables],
        "ly_fit_ok": [t.fit_ok for t in tables],
        "floor_exponent": fo.floor_exponent(tables) if len(tables) > 1 else None,
        "expansion_slope": rep.slope,
        "expansion_limit": cx(rep.limit),
        "expansion_target": cx(rep.target),
        "expansion_drift": None if rep.drift is None else list(rep.drift),
        "reference_mean": None if m_ref is None else list(np.asarray(m_ref, float)),
        "expansion_deviation": rep.deviation,
        "crosscheck_abs_diff": np.abs(rep.k - rep.k_alt),
        "crosscheck_combined_err": combined,
    }
    write_json(run.path("operator.json"), out)
    return out


REPORT_SKIP = {"report.json", "manifest.json"}


def stage_report(out_dir):
    """Aggregate the JSON outputs of a run directory with checksums of every artifact."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.iterdir() if p.is_file() and p.name not in REPORT_SKIP)
    if not files:
        raise ConfigError(f"no artifacts in {out_dir}")
    sums = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files}
    merged = {}
    for p in files:
        if p.suffix == ".json" and not p.name.endswith(".csv.json"):
            merged[p.stem] = json.loads(p.read_text())
    write_json(out_dir / "report.json", {"checksums": sums, "results": merged})
    return merged
