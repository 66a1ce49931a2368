"""Finitely supported laws on the affine group and their structural diagnostics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _rng


class ModelError(ValueError):
    """Raised for malformed or dimensionally inconsistent models."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineMap:
    """The map ``x -> linear @ x + translation``."""

    translation: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        b = _frozen(np.atleast_1d(self.translation))
        g = _frozen(np.atleast_2d(self.linear))
        if b.ndim != 1 or g.shape != (b.size, b.size):
            raise ModelError(f"shape mismatch: translation {b.shape}, linear {g.shape}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise ModelError("affine map entries must be finite")
        object.__setattr__(self, "translation", b)
        object.__setattr__(self, "linear", g)

    @property
    def dim(self) -> int:
        return self.translation.size

    def __call__(self, x):
        return np.asarray(x) @ self.linear.T + self.translation


class AffineMixtureModel:
    """A probability measure on the affine group with finitely many atoms.

    Parameters
    ----------
    atoms : sequence of (weight, AffineMap)
        Weights must be positive and sum to one within 1e-12.
    """

    def __init__(self, atoms: Sequence[tuple[float, AffineMap]]):
        if len(atoms) == 0:
            raise ModelError("model needs at least one atom")
        weights = np.array([float(w) for w, _ in atoms])
        maps = [m for _, m in atoms]
        d = maps[0].dim
        if any(m.dim != d for m in maps):
            raise ModelError("all atoms must share the same dimension")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ModelError(f"weights must be positive and sum to 1, got {weights}")
        self._maps = tuple(maps)
        self.weights = _frozen(weights)
        self.linears = _frozen(np.stack([m.linear for m in maps]))
        self.translations = _frozen(np.stack([m.translation for m in maps]))
        self.cumweights = _frozen(np.cumsum(weights))
        self.dim = d

    @classmethod
    def from_arrays(cls, weights, linears, translations=None):
        linears = np.asarray(linears, dtype=float)
        if linears.ndim == 1:
            linears = linears[:, None, None]
        if translations is None:
            translations = np.zeros(linears.shape[:2])
        translations = np.asarray(translations, dtype=float).reshape(linears.shape[:2])
        return cls([(w, AffineMap(b, g)) for w, g, b in zip(weights, linears, translations)])

    @property
    def atoms(self):
        return list(zip(self.weights.tolist(), self._maps))

    def __len__(self):
        return len(self._maps)

    def __repr__(self):
        return f"AffineMixtureModel(d={self.dim}, atoms={len(self)})"

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "d": self.dim,
            "atoms": [
                {"w": float(w), "g": m.linear.tolist(), "b": m.translation.tolist()}
                for w, m in self.atoms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AffineMixtureModel":
        try:
            d = int(data["d"])
            atoms = [(float(a["w"]), AffineMap(a["b"], a["g"])) for a in data["atoms"]]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"bad model document: {exc}") from exc
        model = cls(atoms)
        if model.dim != d:
            raise ModelError(f"declared d={d} but atoms have dimension {model.dim}")
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AffineMixtureModel":
        return cls.from_dict(json.loads(text))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    # derived quantities ----------------------------------------------------

    def mean_linear(self) -> np.ndarray:
        """z = E M, exact for the finite mixture."""
        return np.einsum("k,kij->ij", self.weights, self.linears)

    def mean_translation(self) -> np.ndarray:
        return self.weights @ self.translations

    def with_translations(self, translations) -> "AffineMixtureModel":
        return AffineMixtureModel.from_arrays(self.weights, self.linears, translations)


def golden_model(p=0.9, rho=0.8308787128910121, theta=1.0, lam=4.0, lam_prime=0.25, b=(1.0, 0.0)):
    """Two-atom planar model: a rotation-similarity and a diagonal affine map.

    ``p`` weights the linear map ``rho * Rot(theta)``; the remaining mass sits
    on ``x -> diag(lam, lam_prime) x + b``.
    """
    c, s = np.cos(theta), np.sin(theta)
    rot = rho * np.array([[c, -s], [s, c]])
    diag = np.diag([lam, lam_prime])
    return AffineMixtureModel(
        [(p, AffineMap(np.zeros(2), rot)), (1.0 - p, AffineMap(np.asarray(b, float), diag))]
    )


def companion_model(model: AffineMixtureModel, v) -> AffineMixtureModel:
    """Model of the recursion ``W_n = M_n^T (W_{n-1} + v)``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.dim,):
        raise ModelError(f"v must have shape ({model.dim},), got {v.shape}")
    gt = np.transpose(model.linears, (0, 2, 1))
    return AffineMixtureModel.from_arrays(model.weights, gt, gt @ v)


# diagnostics -----------------------------------------------------------------


def _word_matrix(model, word):
    g = np.eye(model.dim)
    for i in word:
        g = model.linears[i] @ g
    return g


def is_proximal(g, gap_tol=1e-6) -> bool:
    ev = np.linalg.eigvals(g)
    mods = np.sort(np.abs(ev))[::-1]
    if mods[0] == 0:
        return False
    top = ev[np.argmax(np.abs(ev))]
    if abs(top.imag) > 1e-12 * abs(top):
        return False
    second = mods[1] if len(mods) > 1 else 0.0
    return mods[0] > (1.0 + gap_tol) * second


def proximality_check(model, word_length_max=20, trials=200, gap_tol=1e-6, seed=0):
    """Search random words for a proximal product.

    Returns ``(found, word)``; ``found=False`` means no witness was found,
    not that none exists.
    """
    if word_length_max < 1:
        raise ValueError("word_length_max must be >= 1")
    for i in range(len(model)):
        if is_proximal(model.linears[i], gap_tol):
            return True, (i,)
    if model.dim == 1:
        return False, ()
    rng = _rng.generator(seed, "proximality")
    for _ in range(trials):
        k = int(rng.integers(2, word_length_max + 1)) if word_length_max > 1 else 1
        word = tuple(rng.choice(len(model), size=k, p=model.weights).tolist())
        if is_proximal(_word_matrix(model, word), gap_tol):
            return True, word
    return False, ()


def fixed_point_check(model, tol=None) -> Optional[np.ndarray]:
    """Common fixed point of all atoms, by stacked least squares."""
    d = model.dim
    A = (model.linears - np.eye(d)).reshape(-1, d)
    rhs = -model.translations.reshape(-1)
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = np.linalg.norm(A @ x - rhs)
    if tol is None:
        tol = 1e-9 * (1.0 + np.linalg.norm(model.translations))
    return x if resid < tol else None


def irreducibility_heuristic(model, trials=64, word_length=40, seed=0):
    """Evidence that no finite union of proper subspaces is invariant.

    Returns ``(ok, reason)``. Two statistics are used: finite orbits of
    directions (detects finite invariant unions such as the scalar case),
    and the numerical rank of attracting directions of long products for the
    model and its transpose (detects a limit set inside a proper subspace).
    """
    d = model.dim
    if d == 1:
        return True, ""
    rng = _rng.generator(seed, "irreducibility")
    bound = d * (d - 1)
    small_orbits = 0
    for _ in range(trials):
        x = rng.standard_normal(d)
        x /= np.linalg.norm(x)
        dirs = [x]
        for _ in range(word_length):
            y = model.linears[rng.choice(len(model), p=model.weights)] @ dirs[-1]
            ny = np.linalg.norm(y)
            if ny == 0:
                break
            y = y / ny
            if y[np.argmax(np.abs(y))] < 0:
                y = -y
            dirs.append(y)
        distinct = np.unique(np.round(np.array(dirs), 8), axis=0)
        if len(distinct) <= bound:
            small_orbits += 1
    if small_orbits == trials:
        return False, f"every sampled orbit has <= {bound} directions (finite invariant union)"
    for transpose in (False, True):
        mats = np.transpose(model.linears, (0, 2, 1)) if transpose else model.linears
        tops = []
        for _ in range(trials):
            g = np.eye(d)
            for i in rng.choice(len(model), size=word_length, p=model.weights):
                g = mats[i] @ g
                g /= max(np.linalg.norm(g), 1e-300)
            u, sv, _ = np.linalg.svd(g)
            if sv[0] > 0 and (d < 2 or sv[1] < 0.5 * sv[0]):
                tops.append(u[:, 0])
        if len(tops) < d:
            continue
        sv = np.linalg.svd(np.array(tops) / np.sqrt(len(tops)), compute_uv=False)
        if sv[-1] < 1e-6:
            side = "transpose" if transpose else "model"
            return False, f"attracting directions of the {side} lie in a proper subspace"
    return True, ""


@dataclass
class ConditionReport:
    proximal_found: bool
    proximal_witness: tuple
    fixed_point: Optional[np.ndarray]
    lyapunov_negative: bool
    lyapunov: float
    lyapunov_se: float
    s_infty_lower: float
    kappa_exceeds_one: bool
    irreducibility_heuristic: bool
    reasons: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.proximal_found
            and self.fixed_point is None
            and self.lyapunov_negative
            and self.kappa_exceeds_one
            and self.irreducibility_heuristic
        )

    def to_dict(self) -> dict:
        return {
            "proximal_found": self.proximal_found,
            "proximal_witness": list(self.proximal_witness),
            "fixed_point": None if self.fixed_point is None else self.fixed_point.tolist(),
            "lyapunov_negative": self.lyapunov_negative,
            "lyapunov": self.lyapunov,
            "lyapunov_se": self.lyapunov_se,
            "s_infty_lower": self.s_infty_lower,
            "kappa_exceeds_one": self.kappa_exceeds_one,
            "irreducibility_heuristic": self.irreducibility_heuristic,
            "ok": self.ok,
            "reasons": list(self.reasons),
        }


DEFAULT_BUDGETS = {
    "word_length_max": 20,
    "proximal_trials": 200,
    "gap_tol": 1e-6,
    "lyapunov_n": 20000,
    "kappa_n": 4,
    "kappa_N": 20000,
    "s_probe": (0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
    "irreducibility_trials": 64,
    "seed": 0,
}


def condition_report(model, budgets=None) -> ConditionReport:
    """Aggregate all structural checks into one report."""
    from .spectrum import kappa_estimate, lyapunov_estimate

    b = dict(DEFAULT_BUDGETS)
    b.update(budgets or {})
    reasons = []
    found, witness = proximality_check(
        model, b["word_length_max"], b["proximal_trials"], b["gap_tol"], seed=b["seed"]
    )
    if not found:
        reasons.append("no proximal element found among sampled words")
    fp = fixed_point_check(model)
    if fp is not None:
        reasons.append(f"atoms share the fixed point {fp.tolist()}")
    try:
        L, L_se = lyapunov_estimate(model, b["lyapunov_n"], seed=b["seed"])
    except FloatingPointError as exc:
        L, L_se = float("nan"), float("nan")
        reasons.append(f"lyapunov estimate failed: {exc}")
    neg = bool(L < 0)
    if not neg:
        reasons.append(f"Lyapunov exponent estimate {L:.4g} is not negative")
    s_lower, exceeds = 0.0, False
    for s in b["s_probe"]:
        est = kappa_estimate(model, s, b["kappa_n"], b["kappa_N"], seed=b["seed"])
        if not np.isfinite(est.log_kappa):
            break
        if est.log_kappa > 0:
            # a heavy-tailed sample underestimates the moment, so a positive value stands
            exceeds = True
        if est.unstable:
            break
        s_lower = s
        if exceeds:
            break
    if not exceeds:
        reasons.append(f"kappa(s) <= 1 on the probed range up to s={s_lower}")
    irr, why = irreducibility_heuristic(model, b["irreducibility_trials"], seed=b["seed"])
    if not irr:
        reasons.append(why)
    return ConditionReport(
        proximal_found=found,
        proximal_witness=witness,
        fixed_point=fp,
        lyapunov_negative=neg,
        lyapunov=float(L),
        lyapunov_se=float(L_se),
        s_infty_lower=float(s_lower),
        kappa_exceeds_one=exceeds,
        irreducibility_heuristic=irr,
        reasons=reasons,
    )
