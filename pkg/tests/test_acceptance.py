"""Acceptance criteria on full-budget runs.

The session fixtures run the golden pipeline (default budgets), the scalar
oracle model and the light-tailed (alpha > 2) model once; each test reads the
artifacts and records one PASS/FAIL line.
"""

import json
import time

import numpy as np
import pytest

from affinewalk import cli, pipeline as pl
from affinewalk.config import GoldenSpec, RunConfig
from affinewalk.fourier_op import holder_params_select

from conftest import LN2, record, scalar_model

SEED = 20_261_019
HEAVY_RHO = 0.9228323594755592  # golden family, lambda = 1.5, tuned to alpha = 5


def _csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def _json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    t0 = time.perf_counter()
    assert cli.main(["golden", "--seed", str(SEED), "--out", str(out)]) == cli.EXIT_OK
    (out.parent / "golden_seconds.txt").write_text(f"{time.perf_counter() - t0:.1f}\n")
    return out


@pytest.fixture(scope="session")
def scalar_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scalar")
    cfg = out.parent / "scalar.json"
    cfg.write_text(json.dumps({"seed": SEED, "out": str(out), "model": scalar_model().to_dict()}))
    for cmd in ("spectrum", "tails"):
        assert cli.main([cmd, "--config", str(cfg)]) == cli.EXIT_OK
    return out


@pytest.fixture(scope="session")
def heavy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("heavy")
    cfg = RunConfig.from_dict({"seed": SEED, "out": str(out),
                               "golden": {"lam": 1.5, "rho": HEAVY_RHO, "alpha_target": 5.0},
                               "budgets": {"N_samples": 200_000},
                               "stable": {"n_panel": [10_000], "N": 100_000}})
    run = pl.Run(cfg, cfg.golden.model())
    pl.stage_spectrum(run)
    pl.stage_stable(run)
    t0 = time.perf_counter()
    pl.stage_operator(run)
    (out / "operator_seconds.txt").write_text(f"{time.perf_counter() - t0:.1f}\n")
    return out


def test_c01_scalar_spectrum(scalar_dir):
    s = _json(scalar_dir / "spectrum.json")
    L, a, m = s["lyapunov"], s["alpha"], s["m_alpha"]
    ok = (abs(L + 0.4 * LN2) < 0.01 and abs(a - np.log2(7 / 3)) < 0.03
          and abs(m - 0.4 * LN2) < 0.03)
    assert record(1, ok, f"L={L:.5f} (-0.27726), alpha={a:.5f} (1.22239), "
                         f"m_alpha={m:.5f} (0.27726)")


def test_c02_kappa_crosscheck(golden_dir):
    a = _json(golden_dir / "spectrum.json")["alpha"]
    rows = _csv(golden_dir / "kappa_crosscheck.csv")
    diffs = []
    for frac in (0.25, 0.5, 1.0):
        i = int(np.argmin(np.abs(rows["s"] - frac * a)))
        assert abs(rows["s"][i] - frac * a) < 1e-9
        diffs.append(float(rows["abs_diff"][i]))
    ok = max(diffs) < 0.03
    assert record(2, ok, "|kappa_mc - kappa_twisted| at s=(.25,.5,1)alpha: "
                         + ", ".join(f"{d:.4f}" for d in diffs) + " (< 0.03)")


def _longest_flat_run(norm, reliable, factor):
    best, i = 0, 0
    while i < len(norm):
        if not reliable[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(norm) and reliable[j + 1]:
            sub = norm[i:j + 2]
            if sub.max() / sub.min() >= factor:
                break
            j += 1
        best = max(best, j - i + 1)
        i += 1
    return best


def test_c03_tail_homogeneity(golden_dir):
    p = _csv(golden_dir / "eta_profile.csv")
    run = _longest_flat_run(p["normalized"], p["reliable"] > 0, 2.0)
    rel = p["normalized"][p["reliable"] > 0]
    ok = run >= 3
    assert record(3, ok, f"longest run within factor 2: {run} reliable levels; "
                         f"column range {rel.min():.4f}..{rel.max():.4f}")


def _consistency(t):
    gap = abs(t["c_direct"] - t["c_renewal"]) / t["c_renewal"]
    lo = max(t["c_direct_ci"][0], t["c_renewal_ci"][0])
    hi = min(t["c_direct_ci"][1], t["c_renewal_ci"][1])
    return gap, lo <= hi


def test_c04_tail_constant_consistency(golden_dir, scalar_dir):
    g, s = _json(golden_dir / "tails.json"), _json(scalar_dir / "tails.json")
    (gg, go), (sg, so) = _consistency(g), _consistency(s)
    ok = gg < 0.25 and sg < 0.25 and go and so
    assert record(4, ok, f"golden direct {g['c_direct']:.4f} vs renewal {g['c_renewal']:.4f} "
                         f"(gap {gg:.1%}, CIs overlap {go}); scalar {s['c_direct']:.4f} vs "
                         f"{s['c_renewal']:.4f} (gap {sg:.1%}, CIs overlap {so})")


def test_c05_companion_homogeneity(golden_dir):
    t = _json(golden_dir / "tails.json")
    hom = t["homogeneity_ratio"] / t["homogeneity_target"] - 1
    sym = t["symmetry_ratio"] - 1
    ok = abs(hom) < 0.2 and (t["case"] != "I" or abs(sym) < 0.2)
    assert record(5, ok, f"c*(2v)/c*(v) = {t['homogeneity_ratio']:.4f} vs 2^alpha = "
                         f"{t['homogeneity_target']:.4f} ({hom:+.1%}); c*(-v)/c*(v) - 1 = "
                         f"{sym:+.1%} (case {t['case']})")


def test_c06_three_routes(golden_dir):
    s = _json(golden_dir / "stable.json")
    worst_pair = max(r["max_pairwise_rel"] for r in s["routes"])
    worst_im = max(abs(r[k]["im"]) / abs(complex(r[k]["re"], r[k]["im"]))
                   for r in s["routes"] for k in ("closed", "mc", "fourier"))
    ok = worst_pair < 0.10 and worst_im < 0.05
    assert record(6, ok, f"max pairwise relative deviation {worst_pair:.1%} (< 10%), "
                         f"max |Im|/|C| {worst_im:.1%} (< 5%) over {len(s['routes'])} directions")


def test_c07_stable_limit_cf(golden_dir):
    p = _csv(golden_dir / "cf_panel.csv")
    ns = sorted(set(p["n"].astype(int)))
    dev, se = {}, {}
    for n in ns:
        sel = p["n"] == n
        i = int(np.argmax(p["abs_deviation"][sel]))
        dev[n], se[n] = p["abs_deviation"][sel][i], p["stderr"][sel][i]
    n0, n1 = ns[0], ns[-1]
    shrinks = dev[n1] <= dev[n0] + 2 * np.hypot(se[n0], se[n1])
    ok = n0 == 10_000 and dev[n0] < 0.05 and shrinks
    assert record(7, ok, f"max CF deviation n={n0}: {dev[n0]:.4f} (< 0.05), n={n1}: "
                         f"{dev[n1]:.4f}; shrinks within SE: {shrinks}")


def test_c08_gaussian_variance(heavy_dir):
    p = _csv(heavy_dir / "variance_panel.csv")
    worst = float(p["rel_deviation"].max())
    a = _json(heavy_dir / "spectrum.json")["alpha"]
    ok = a > 2 and worst < 0.10
    assert record(8, ok, f"alpha={a:.3f}; max relative variance deviation over "
                         f"{len(p)} directions {worst:.2%} (< 10%), n={int(p['n'][0])}")


def test_c09_delta_bound(golden_dir):
    d = _csv(golden_dir / "delta_bound.csv")
    ratio = d["delta_norm"] / d["bound"]
    ok = bool(np.all(ratio <= 1)) and d["t"].min() <= 1e-4 and d["t"].max() >= 0.5
    assert record(9, ok, f"max |delta(t)|/(4 K t|log t|) = {ratio.max():.3f} over "
                         f"{len(d)} t in [{d['t'].min():.0e}, {d['t'].max():.2f}]")


def test_c10_spectral_gap(golden_dir):
    o = _json(golden_dir / "operator.json")
    a = _json(golden_dir / "spectrum.json")["alpha"]
    eps = holder_params_select(a).epsilon
    k0 = complex(o["k0"]["re"], o["k0"]["im"])
    abs_k = [e["abs_k"] for e in o["eigen"]]
    ok = (abs(k0 - 1) < 1e-12 and o["psi0_max_dev"] < 1e-12 and max(abs_k) < 1
          and max(o["ly_rho"]) < 0.95 and abs(o["floor_exponent"] - eps) <= 0.3)
    assert record(10, ok, f"|k(0)-1|={abs(k0 - 1):.1e}, psi0 dev {o['psi0_max_dev']:.1e}, "
                          f"|k(v)|={', '.join(f'{x:.4f}' for x in abs_k)}, LY rho max "
                          f"{max(o['ly_rho']):.3f}, floor exponent {o['floor_exponent']:.3f} "
                          f"vs epsilon {eps}")


def test_c11_eigenvalue_expansion(golden_dir, heavy_dir):
    g, h = _json(golden_dir / "operator.json"), _json(heavy_dir / "operator.json")
    a = _json(golden_dir / "spectrum.json")["alpha"]
    secs = float((heavy_dir / "operator_seconds.txt").read_text())
    ok = (abs(g["expansion_slope"] - a) < 0.1 and g["expansion_deviation"] < 0.15
          and abs(h["expansion_slope"] - 2) < 0.1 and h["expansion_deviation"] < 0.15)
    assert record(11, ok, f"golden slope {g['expansion_slope']:.3f} (alpha {a:.3f}), limit "
                          f"deviation {g['expansion_deviation']:.1%}; alpha>2 slope "
                          f"{h['expansion_slope']:.3f}, deviation {h['expansion_deviation']:.1%}; "
                          f"alpha>2 operator stage {secs:.0f} s")


def test_c12_eigenfunctional_crosscheck(golden_dir):
    o = _json(golden_dir / "operator.json")
    diff, err = np.array(o["crosscheck_abs_diff"]), np.array(o["crosscheck_combined_err"])
    ok = bool(np.all(diff <= 3 * err))
    assert record(12, ok, f"max |k - k_alt| / combined error = {np.max(diff / err):.2f} "
                          f"(<= 3) over {len(diff)} t")


SMALL = {
    "golden": {"rho": 0.8308787128910121},
    "budgets": {"N_samples": 50_000, "kappa_N": 20_000},
    "stable": {"n_panel": [500, 1000], "N": 2000, "directions": 2},
    "operator": {"lattice_R": 8.0, "ly_R": 4.0, "ly_n_max": 6, "ly_trials": 1,
                 "t_exponents": [4, 5, 6, 7], "per_decade": 12, "angles": 64,
                 "v_norms": [0.5, 1.0]},
}


def test_c13_determinism(tmp_path):
    digests = []
    for name in ("a", "b"):
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps({"seed": 7, "out": str(tmp_path / name), **SMALL}))
        assert cli.main(["golden", "--config", str(cfg)]) == cli.EXIT_OK
        digests.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).glob("*.csv"))})
    same = digests[0].keys() == digests[1].keys() and all(
        digests[0][k] == digests[1][k] for k in digests[0])
    assert record(13, same and len(digests[0]) > 10,
                  f"{len(digests[0])} CSV artifacts byte-identical across two golden runs: {same}")
