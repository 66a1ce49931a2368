"""Run configuration: JSON documents validated against the shipped schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .model import AffineMixtureModel, ModelError, golden_model


class ConfigError(ValueError):
    pass


def schema():
    text = resources.files("affinewalk").joinpath("config.schema.json").read_text()
    return json.loads(text)


DEFAULT_BUDGETS = {
    "N_samples": 1_000_000,
    "n_steps": 10_000,
    "grid_size": 512,
    "kappa_n": 8,
    "kappa_N": 200_000,
    "trunc_tol": 1e-10,
    "k_max": 10_000,
}

DEFAULT_STABLE = {
    "directions": 8,
    "magnitudes": None,
    "C_targets": [0.15, 0.5, 1.5],
    "n_panel": [10_000, 40_000],
    "N": 100_000,
    "x0": None,
}

DEFAULT_OPERATOR = {
    "v_norms": [0.25, 0.5, 1.0],
    "t_exponents": [4, 5, 6, 7, 8, 9, 10],
    "lattice_R": 64.0,
    "lattice_h": 0.25,
    "ly_R": 32.0,
    "ly_n_max": 30,
    "ly_trials": 4,
    "per_decade": 48,
    "angles": 256,
}


@dataclass(frozen=True)
class GoldenSpec:
    """Parameters of the two-atom planar example; ``rho=None`` means tune to ``alpha_target``."""

    p: float = 0.9
    rho: float = None
    theta_rot: float = 1.0
    lam: float = 4.0
    lam_prime: float = 0.25
    b: tuple = (1.0, 0.0)
    alpha_target: float = 0.8

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ConfigError("golden: need 0 < p < 1")
        if self.rho is not None and not self.rho > 0:
            raise ConfigError("golden: need rho > 0")
        if not 0 < self.lam_prime < 1 < self.lam:
            raise ConfigError("golden: need 0 < lambda' < 1 < lambda")
        if not any(self.b):
            raise ConfigError("golden: need b != 0")
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))

    def model(self, rho=None):
        r = self.rho if rho is None else rho
        if r is None:
            raise ConfigError("golden: rho is not set; tune it first")
        return golden_model(self.p, r, self.theta_rot, self.lam, self.lam_prime, self.b)


@dataclass
class RunConfig:
    seed: int
    model: AffineMixtureModel = None
    golden: GoldenSpec = None
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    spectrum: dict = field(default_factory=dict)
    stable: dict = field(default_factory=lambda: dict(DEFAULT_STABLE))
    operator: dict = field(default_factory=lambda: dict(DEFAULT_OPERATOR))
    out: str = "run"
    threads: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        try:
            jsonschema.validate(doc, schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
        doc = copy.deepcopy(doc)
        model = golden = None
        try:
            if "model" in doc:
                model = AffineMixtureModel.from_dict(doc["model"])
            elif "model_file" in doc:
                path = Path(base_dir) / doc["model_file"]
                model = AffineMixtureModel.from_json(path.read_text())
        except (ModelError, OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"model: {exc}") from exc
        if "golden" in doc or model is None:
            golden = GoldenSpec(**{k: (tuple(v) if k == "b" else v)
                                   for k, v in doc.get("golden", {}).items()})
        return cls(
            seed=int(doc["seed"]),
            model=model,
            golden=golden,
            budgets={**DEFAULT_BUDGETS, **doc.get("budgets", {})},
            spectrum=doc.get("spectrum", {}),
            stable={**DEFAULT_STABLE, **doc.get("stable", {})},
            operator={**DEFAULT_OPERATOR, **doc.get("operator", {})},
            out=doc.get("out", "run"),
            threads=int(doc.get("threads", 1)),
            raw=doc,
        )

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(doc, path.parent)
