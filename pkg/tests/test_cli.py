import json

import numpy as np
import pytest

from affinewalk import cli
from affinewalk.config import ConfigError, GoldenSpec, RunConfig

from conftest import scalar_model


def test_spectrum_without_seed_is_config_error(capsys):
    assert cli.main(["spectrum"]) == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_unknown_budget_key_is_config_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "budgets": {"bogus": 3}}))
    assert cli.main(["spectrum", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_golden_spec_validation():
    with pytest.raises(ConfigError):
        GoldenSpec(lam=0.5)
    with pytest.raises(ConfigError):
        GoldenSpec(b=(0.0, 0.0))


def test_config_model_inline():
    cfg = RunConfig.from_dict({"seed": 3, "model": scalar_model().to_dict()})
    assert cfg.model.hash == scalar_model().hash and cfg.golden is None
    assert cfg.budgets["N_samples"] == 1_000_000


def test_condition_failure_exit(tmp_path):
    ident = {"d": 2, "atoms": [{"w": 1.0, "g": [[1, 0], [0, 1]], "b": [0, 0]}]}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "model": ident, "out": str(tmp_path / "run"),
                               "budgets": {"kappa_N": 2000}}))
    assert cli.main(["model-check", "--config", str(cfg)]) == cli.EXIT_CONDITION
    assert json.loads((tmp_path / "run" / "condition.json").read_text())["ok"] is False


def test_spectrum_scalar_run(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 2, "model": scalar_model().to_dict(),
                               "out": str(tmp_path / "run"), "budgets": {"kappa_N": 20_000}}))
    assert cli.main(["spectrum", "--config", str(cfg)]) == cli.EXIT_OK
    spec = json.loads((tmp_path / "run" / "spectrum.json").read_text())
    assert abs(spec["alpha"] - np.log2(7 / 3)) < 0.05
    assert cli.main(["report", "--out", str(tmp_path / "run")]) == cli.EXIT_OK
    rep = json.loads((tmp_path / "run" / "report.json").read_text())
    assert "spectrum.json" in rep["checksums"]


def test_report_without_output_dir():
    assert cli.main(["report"]) == cli.EXIT_CONFIG
