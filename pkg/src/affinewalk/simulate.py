"""Monte Carlo engines: forward recursion, Birkhoff sums, backward series.

All engines are vectorized over sample indices and draw atoms from the
counter-based streams in :mod:`affinewalk._rng`, so output depends only on
``(model, seed, parameters)`` and never on chunk size or thread count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rng

log = logging.getLogger(__name__)

OVERFLOW = 1e300
REFRESH_EVERY = 32
CHUNK = 1 << 16


class SimulationOverflow(FloatingPointError):
    """A coordinate exceeded the overflow guard."""

    def __init__(self, step, where="state"):
        super().__init__(f"{where} exceeded {OVERFLOW:g} at step {step}; "
                         "the model is probably not contracting on average")
        self.step = step


@dataclass(frozen=True)
class SampleCloud:
    """N i.i.d. draws from a stationary law, with provenance."""

    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < 1:
            raise ValueError("a cloud needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("cloud contains NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def dim(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]

    @property
    def norms(self):
        return np.linalg.norm(self.samples, axis=1)

    def scaled(self, u):
        return SampleCloud(self.samples * u, {**self.meta, "scaled_by": float(u)})

    def to_csv(self, path):
        header = ",".join(f"x{i + 1}" for i in range(self.dim))
        np.savetxt(path, self.samples, delimiter=",", header=header, comments="", fmt="%.17g")
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.meta, fh, sort_keys=True, indent=1, default=_jsonable)

    @classmethod
    def from_csv(cls, path):
        x = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        try:
            with open(str(path) + ".json") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        return cls(x, meta)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


@dataclass(frozen=True)
class TrajectoryBatch:
    x0: np.ndarray
    n: int
    paths: np.ndarray  # (N, n+1, d) or None when paths are not kept
    sums: np.ndarray  # (N, d)


def _run_chunks(fn, N, threads):
    starts = list(range(0, N, CHUNK))
    blocks = [np.arange(s, min(s + CHUNK, N), dtype=np.uint64) for s in starts]
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    return parts


def _opnorm(P):
    if P.shape[-1] == 1:
        return np.abs(P[:, 0, 0])
    if P.shape[-1] == 2:
        a, b, c, d = P[:, 0, 0], P[:, 0, 1], P[:, 1, 0], P[:, 1, 1]
        s = a * a + b * b + c * c + d * d
        det = a * d - b * c
        return np.sqrt(0.5 * (s + np.sqrt(np.maximum(s * s - 4 * det * det, 0.0))))
    return np.linalg.norm(P, ord=2, axis=(1, 2))


# forward recursion ------------------------------------------------------------


def forward_trajectory(model, x0, n, seed, N=1, keep_paths=True):
    """Paths ``X_0 = x0, X_k = g X_{k-1} + b`` and sums ``S_n = sum_{k<=n} X_k``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    key = _rng.stream_key(seed, "forward")
    ids = np.arange(N, dtype=np.uint64)
    X = np.tile(x0, (N, 1))
    S = X.copy()
    paths = np.empty((N, n + 1, model.dim)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = X
    for k in range(1, n + 1):
        a = _rng.choose(key, ids, k, model.cumweights)
        X = np.einsum("nij,nj->ni", model.linears[a], X) + model.translations[a]
        if np.max(np.abs(X)) > OVERFLOW:
            raise SimulationOverflow(k)
        S += X
        if keep_paths:
            paths[:, k] = X
    return TrajectoryBatch(x0=x0, n=n, paths=paths, sums=S)


def birkhoff_sum_cloud(model, x0, n, N, seed, checkpoints=None, threads=1, on_overflow="raise"):
    """N independent draws of ``S_n^x``; memory O(N d).

    With ``checkpoints`` (sorted step counts <= n) returns a dict
    ``{m: S_m samples}`` taken along the same trajectories.
    ``on_overflow="drop"`` marks overflowing samples with NaN instead of
    raising.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    key = _rng.stream_key(seed, "forward")
    marks = sorted(set(checkpoints or [n]) | {n})
    if marks[0] < 1 or marks[-1] > n:
        raise ValueError("checkpoints must lie in [1, n]")
    G, B, cw, d = model.linears, model.translations, model.cumweights, model.dim

    def block(ids):
        X = np.tile(x0, (ids.size, 1))
        S = X.copy()
        out = {}
        bad = np.zeros(ids.size, dtype=bool)
        for k in range(1, n + 1):
            a = _rng.choose(key, ids, k, cw)
            if d == 2:
                g = G[a]
                x1 = g[:, 0, 0] * X[:, 0] + g[:, 0, 1] * X[:, 1] + B[a, 0]
                x2 = g[:, 1, 0] * X[:, 0] + g[:, 1, 1] * X[:, 1] + B[a, 1]
                X = np.stack([x1, x2], axis=1)
            else:
                X = np.einsum("nij,nj->ni", G[a], X) + B[a]
            if k % REFRESH_EVERY == 0 or k == n:
                big = np.abs(X).max(axis=1) > OVERFLOW
                if big.any():
                    if on_overflow == "raise":
                        raise SimulationOverflow(k)
                    bad |= big
                    X[big] = 0.0
            S += X
            if k in marks:
                Sk = S.copy()
                Sk[bad] = np.nan
                out[k] = Sk
        return out

    parts = _run_chunks(block, N, threads)
    res = {m: np.concatenate([p[m] for p in parts]) for m in marks}
    if checkpoints is None:
        return res[n]
    return res


# backward series ---------------------------------------------------------------


def _backward_block(model, key, ids, trunc_tol, k_max, companion):
    """Backward products for a block of sample indices.

    Returns ``(total, first, K)``. For the eta engine ``total`` is the tail
    ``sum_{k>=1} M_1..M_k Q_{k+1}`` and ``first`` is ``Q_1``; for the
    companion engine ``total`` is the matrix ``Z* = sum_k M_1*..M_k*``.
    """
    G = np.transpose(model.linears, (0, 2, 1)) if companion else model.linears
    B = model.translations
    norms_g = _opnorm(model.linears)
    cw, d, n = model.cumweights, model.dim, ids.size
    a = _rng.choose(key, ids, 1, cw)
    P = G[a].copy()
    bound = norms_g[a].copy()
    if companion:
        acc = P.copy()
        out = np.zeros((n, d, d))
        first = None
    else:
        acc = np.zeros((n, d))
        out = np.zeros((n, d))
        first = B[a].copy()
    K = np.full(n, k_max, dtype=np.int64)
    pos = np.arange(n)
    wid = ids.copy()
    for k in range(2, k_max + 1):
        done = bound < trunc_tol
        if done.any():
            out[pos[done]] = acc[done]
            K[pos[done]] = k - 1
            keep = ~done
            P, bound, acc, pos, wid = P[keep], bound[keep], acc[keep], pos[keep], wid[keep]
            if pos.size == 0:
                break
        a = _rng.choose(key, wid, k, cw)
        if companion:
            P = P @ G[a]
            acc += P
        else:
            acc += np.einsum("nij,nj->ni", P, B[a])
            P = P @ G[a]
        if k % REFRESH_EVERY == 0:
            bound = _opnorm(P)
            if np.any(bound > OVERFLOW) or np.any(np.abs(acc) > OVERFLOW):
                raise SimulationOverflow(k, "backward product")
        else:
            bound = bound * norms_g[a]
    if pos.size:
        out[pos] = acc
    hits = int(np.sum(K >= k_max))
    return out, first, K, hits


def _backward(model, seed, stream, N, trunc_tol, k_max, companion, threads):
    key = _rng.stream_key(seed, stream)
    parts = _run_chunks(
        lambda ids: _backward_block(model, key, ids, trunc_tol, k_max, companion), N, threads
    )
    total = np.concatenate([p[0] for p in parts])
    first = None if companion else np.concatenate([p[1] for p in parts])
    K = np.concatenate([p[2] for p in parts])
    hits = sum(p[3] for p in parts)
    return total, first, K, hits


def _meta(model, seed, trunc_tol, k_max, K, hits, N, kind, **extra):
    biased = hits > 0.01 * N
    if biased:
        log.warning("%d of %d samples hit k_max=%d; cloud flagged as biased", hits, N, k_max)
    return {
        "kind": kind,
        "model_hash": model.hash,
        "seed": int(seed),
        "trunc_tol": float(trunc_tol),
        "k_max": int(k_max),
        "budget_hits": int(hits),
        "biased": bool(biased),
        "mean_terms": float(np.mean(K)),
        **extra,
    }


def backward_stationary_sample(model, trunc_tol=1e-10, k_max=10000, seed=0, N=10000, threads=1):
    """Draws of ``R = Q_1 + sum_k M_1..M_k Q_{k+1}``, i.e. of the stationary law."""
    tail, q1, K, hits = _backward(model, seed, "eta", N, trunc_tol, k_max, False, threads)
    meta = _meta(model, seed, trunc_tol, k_max, K, hits, N, "eta")
    return SampleCloud(q1 + tail, meta)


def paired_eta_etaprime_sample(model, trunc_tol=1e-10, k_max=10000, seed=0, N=10000, threads=1):
    """Coupled clouds ``(R, R - Q_1)`` from one random stream.

    The eta cloud is identical to :func:`backward_stationary_sample` with the
    same arguments.
    """
    tail, q1, K, hits = _backward(model, seed, "eta", N, trunc_tol, k_max, False, threads)
    meta = _meta(model, seed, trunc_tol, k_max, K, hits, N, "eta")
    return SampleCloud(q1 + tail, meta), SampleCloud(tail, {**meta, "kind": "eta_prime"})


@dataclass(frozen=True)
class CompanionSeries:
    """Per-sample matrices ``Z* = sum_k M_1^T..M_k^T``; ``Z* v`` has law eta_v."""

    Z: np.ndarray
    meta: dict

    def cloud(self, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            raise ValueError("v must be nonzero")
        return SampleCloud(self.Z @ v, {**self.meta, "kind": "eta_v", "v": v.tolist()})


def companion_series(model, trunc_tol=1e-10, k_max=10000, seed=0, N=10000, threads=1):
    Z, _, K, hits = _backward(model, seed, "companion", N, trunc_tol, k_max, True, threads)
    return CompanionSeries(Z, _meta(model, seed, trunc_tol, k_max, K, hits, N, "companion"))


def companion_stationary_sample(model, v, trunc_tol=1e-10, k_max=10000, seed=0, N=10000,
                                threads=1):
    """Draws of ``Z* v``, the stationary law of ``W_n = M_n^T (W_{n-1} + v)``."""
    return companion_series(model, trunc_tol, k_max, seed, N, threads).cloud(v)
