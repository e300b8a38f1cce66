from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from rarequeue.config import ExperimentFile, load_experiment
from rarequeue.dist import GammaArrival, UniformService

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "model": {"arrival": {"family": "exponential", "rate": 1.0}, "service": {"family": "uniform"}, "s": [5]},
    "estimator": {"cycles": 100},
}


def test_shipped_configs_load():
    names = sorted(p.name for p in CONFIGS.glob("*.yaml"))
    assert "gamma_uniform.yaml" in names
    for p in CONFIGS.glob("*.yaml"):
        exp = load_experiment(p)
        for s in exp.model.s:
            exp.run_config(s)


def test_gamma_uniform_config():
    exp = load_experiment(CONFIGS / "gamma_uniform.yaml")
    assert isinstance(exp.arrival_spec(), GammaArrival)
    assert isinstance(exp.service_spec(), UniformService)
    cfg = exp.run_config(100)
    assert cfg.delta == 1.0 and cfg.batches == 20 and cfg.cpu_seconds == 120
    assert (cfg.band.c_star, cfg.band.c1, cfg.band.eta) == (1.0, 1.1, 0.0)


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate({**BASE, "bogus": 1})
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate({**BASE, "band": {"width": 2}})


def test_negative_eta_rejected():
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate({**BASE, "band": {"eta": -0.5}})


def test_one_stopping_rule():
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate({**BASE, "estimator": {"cycles": 1, "sim_time": 2.0}})
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate({**BASE, "estimator": {}})


def test_uniform_order():
    bad = {**BASE, "model": {**BASE["model"], "service": {"family": "uniform", "low": 1.0, "high": 0.5}}}
    with pytest.raises(ValidationError):
        ExperimentFile.model_validate(bad)


def test_overrides():
    exp = ExperimentFile.model_validate(BASE)
    o = exp.with_overrides(seed=9, batches=4, method="is", cpu_seconds=3.0, out_dir="x")
    assert o.seed == 9 and o.estimator.batches == 4 and o.estimator.method == "is"
    assert o.estimator.cpu_seconds == 3.0 and o.estimator.cycles is None
    assert o.output.dir == "x"
    assert exp.with_overrides() == exp


def test_scipy_families(tmp_path):
    doc = {
        "model": {
            "arrival": {"family": "scipy", "name": "gamma", "args": [2.0], "kwargs": {"scale": 0.5}},
            "service": {"family": "scipy", "name": "uniform", "args": [0.0, 1.0]},
            "s": [3],
        },
        "estimator": {"sim_time": 10},
    }
    p = tmp_path / "e.yaml"
    p.write_text(yaml.safe_dump(doc))
    exp = load_experiment(p)
    a, s = exp.arrival_spec(), exp.service_spec()
    assert a.mean == pytest.approx(1.0) and s.mean == pytest.approx(0.5)
    assert s.bounded and s.upper == 1.0


def test_top_level_must_be_mapping(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        load_experiment(p)
