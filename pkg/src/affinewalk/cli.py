"""Command-line front end.

Exit codes: 0 success, 2 structural condition failed, 3 numerical failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from dataclasses import asdict, replace

from . import pipeline as pl
from .config import ConfigError, RunConfig
from .fourier_op import EigenNonConvergence, InfeasibleParams
from .model import ModelError
from .projective import ConvergenceError, DegenerateGeometry
from .simulate import SimulationOverflow
from .spectrum import NoSignChange
from .stablelaw import QuadratureError, RegimeError
from .tails import HomogeneityNotReached, InconsistentSpectrum, InsufficientTailData

EXIT_OK, EXIT_CONDITION, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4

NUMERICAL = (EigenNonConvergence, ConvergenceError, DegenerateGeometry, SimulationOverflow,
             NoSignChange, QuadratureError, RegimeError, HomogeneityNotReached,
             InconsistentSpectrum, InsufficientTailData, FloatingPointError)

STAGES = {
    "model-check": [pl.stage_model_check],
    "simulate": [pl.stage_simulate],
    "spectrum": [pl.stage_spectrum],
    "projective": [pl.stage_projective],
    "tails": [pl.stage_tails],
    "stable-check": [pl.stage_stable],
    "operator": [pl.stage_operator],
    "golden": [pl.stage_model_check, pl.stage_spectrum, pl.stage_projective,
               lambda run: pl.stage_simulate(run, write_clouds=False), pl.stage_tails,
               pl.stage_stable, pl.stage_operator],
}


def build_parser():
    ap = argparse.ArgumentParser(prog="affinewalk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(STAGES) + ["report"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads")
        if name == "golden":
            p.add_argument("--alpha-target", type=float, help="tail index to tune rho to")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args):
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
    if args.config:
        return RunConfig.load(args.config, overrides)
    doc = {k: v for k, v in overrides.items() if v is not None}
    if args.command == "golden":
        doc.setdefault("golden", {})
    return RunConfig.from_dict(doc)


def _model(cfg, args, run_dir):
    """Resolve the model; golden specs without rho are tuned to the alpha target."""
    if cfg.model is not None and args.command != "golden":
        return cfg.model, {}
    spec = cfg.golden
    if spec is None:
        raise ConfigError("no model given")
    target = getattr(args, "alpha_target", None)
    if target is not None:
        spec = replace(spec, alpha_target=target, rho=None)
    if spec.rho is None:
        spec = replace(spec, rho=pl.tune_rho(spec, spec.alpha_target, cfg.budgets["grid_size"]))
    return spec.model(), {"golden": asdict(spec)}


def run(command, args):
    if command == "report":
        out = args.out or (RunConfig.load(args.config).out if args.config else None)
        if not out:
            raise ConfigError("report needs --out or a config with an output directory")
        pl.stage_report(out)
        return
    cfg = _load(args)
    model, extra = _model(cfg, args, cfg.out)
    r = pl.Run(cfg, model)
    if extra:
        pl.write_json(r.path("golden_spec.json"), extra["golden"])
    for stage in STAGES[command]:
        stage(r)
    if command == "golden":
        pl.stage_report(r.out)
    manifest = {
        "command": command,
        "config": cfg.raw,
        "model_hash": model.hash,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (r.out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args.command, args)
    except pl.ConditionFailure as exc:
        print(f"condition check failed: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except (ConfigError, ModelError, InfeasibleParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
